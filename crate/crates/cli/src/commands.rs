use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use nk3ml::data::{load_csv_with, save_csv, synth_gaussian_classes, synth_low_rank_noise, CsvOptions, Distractors};
use nk3ml::eval::{run_trials, run_verification_trials, EvalConfig};
use nk3ml::pipeline::{load_model, nk3ml_fit, save_model};
use nk3ml::{Error, LabeledDataset, Matrix, Result, SplitSpec};
use serde_json::json;

use crate::{BenchArgs, DataArgs, EvalArgs, FormatArg, ModeArg, SynthArgs, TrainArgs, TransformArgs};

fn load(args: &DataArgs) -> Result<LabeledDataset> {
    load_csv_with(
        &args.data,
        CsvOptions {
            has_header: !args.no_header,
            has_view: false,
        },
    )
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn check_writable_parent(path: &Path) -> Result<()> {
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty());
    match parent {
        Some(dir) if !dir.is_dir() => Err(Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist"),
        }),
        _ => Ok(()),
    }
}

pub fn train(args: TrainArgs) -> Result<()> {
    check_writable_parent(&args.model)?;
    let data = load(&args.data)?;
    let start = Instant::now();
    let mut model = nk3ml_fit(&data, &args.model_opts.config())?;
    let elapsed = start.elapsed().as_secs_f64();
    if args.stamp {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        model.metadata.fit_timestamp = Some(format!("{secs}"));
    }
    save_model(&model, &args.model)?;

    println!("classes: {}", data.class_count());
    println!("dimension: {}", data.dim());
    println!("samples: {}", data.len());
    println!("nullspace dimension: {}", model.nullspace.output_dim());
    println!("retained directions: {}", model.output_dim());
    println!("objective: {:.6e}", model.kernel_stage.objective());
    // Timing goes to stderr so that stdout stays reproducible.
    eprintln!("fit time: {elapsed:.3} s");
    Ok(())
}

pub fn transform(args: TransformArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let data = load(&args.data)?;
    let mut out = String::from("label");
    for j in 0..model.output_dim() {
        write!(out, ",y{j}").unwrap();
    }
    out.push('\n');
    let mut write_rows = |labels: &mut dyn Iterator<Item = String>, y: &Matrix| {
        for (i, label) in labels.enumerate() {
            out.push_str(&label);
            for v in y.row(i).iter() {
                write!(out, ",{v:?}").unwrap();
            }
            out.push('\n');
        }
    };
    let y = model.transform_rows(data.features())?;
    write_rows(&mut data.labels().iter().map(|l| l.to_string()), &y);
    if let Some(dis) = data.distractors() {
        let yd = model.transform_rows(&dis.features)?;
        write_rows(&mut std::iter::repeat_n("-1".to_string(), yd.nrows()), &yd);
    }
    emit(args.out.as_deref(), &out)
}

pub fn eval(args: EvalArgs) -> Result<()> {
    if let Some(out) = &args.out {
        check_writable_parent(out)?;
    }
    let data = load(&args.data)?;
    let spec = SplitSpec {
        trial_count: args.trials,
        train_fraction: args.train_frac,
        seed: args.seed,
    };
    let config = EvalConfig {
        pipeline: args.model_opts.config(),
        distance: args.distance.into(),
    };
    let body = match args.mode {
        ModeArg::Cmc => {
            let report = run_trials(&data, &spec, &config)?;
            let m = &report.mean;
            println!("rank-1: {:.3}", m.at(1));
            println!("rank-10: {:.3}", m.at(10));
            println!("rank-20: {:.3}", m.at(20));
            match args.format {
                FormatArg::Csv => m.to_csv(),
                FormatArg::Json => {
                    let doc = json!({
                        "mode": "cmc",
                        "trials": spec.trial_count,
                        "seed": spec.seed,
                        "rank1": m.at(1),
                        "rank10": m.at(10),
                        "rank20": m.at(20),
                        "cmc": m.accuracies,
                        "trial_rank1": report.trials.iter().map(|t| t.at(1)).collect::<Vec<_>>(),
                    });
                    serde_json::to_string_pretty(&doc).unwrap() + "\n"
                }
            }
        }
        ModeArg::Verification => {
            let report = run_verification_trials(&data, &spec, &config)?;
            println!("eer: {:.4}", report.mean_eer);
            match args.format {
                FormatArg::Csv => report.pooled.to_csv(),
                FormatArg::Json => {
                    let doc = json!({
                        "mode": "verification",
                        "trials": spec.trial_count,
                        "seed": spec.seed,
                        "eer": report.mean_eer,
                        "trial_eers": report.trial_eers,
                        "pooled_eer": report.pooled.eer,
                    });
                    serde_json::to_string_pretty(&doc).unwrap() + "\n"
                }
            }
        }
    };
    match &args.out {
        Some(path) => emit(Some(path), &body),
        None => Ok(()),
    }
}

pub fn synth(args: SynthArgs) -> Result<()> {
    check_writable_parent(&args.out)?;
    let total = args.classes + args.distractors;
    let full = match args.noise_rank {
        Some(r) => synth_low_rank_noise(total, args.per_class, args.dim, args.spread, args.separation, r, args.seed)?,
        None => synth_gaussian_classes(total, args.per_class, args.dim, args.spread, args.separation, args.seed)?,
    };
    let kept: Vec<usize> = (0..args.classes).collect();
    let mut ds = full.select_classes(&kept)?;
    let view_of = |k: usize| format!("v{k}");
    if args.views {
        let views = (0..ds.len()).map(|i| view_of(i % args.per_class)).collect();
        ds = ds.with_views(views)?;
    }
    if args.distractors > 0 {
        // One sample of each extra identity, tagged as a gallery view.
        let rows: Vec<usize> = (args.classes..total).map(|c| c * args.per_class).collect();
        let features = full.features().select_rows(&rows);
        let views = args
            .views
            .then(|| vec![view_of(args.per_class.saturating_sub(1)); rows.len()]);
        ds = ds.with_distractors(Distractors { features, views })?;
    }
    save_csv(&ds, &args.out)?;
    println!("wrote {} samples of {} classes to {}", ds.len(), ds.class_count(), args.out.display());
    Ok(())
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn bench(args: BenchArgs) -> Result<()> {
    if args.classes == 0 || args.samples % args.classes != 0 {
        return Err(Error::InvalidInput(format!(
            "samples ({}) must be a positive multiple of classes ({})",
            args.samples, args.classes
        )));
    }
    if args.repeats == 0 {
        return Err(Error::InvalidInput("repeats must be positive".into()));
    }
    if let Some(out) = &args.out {
        check_writable_parent(out)?;
    }
    let per_class = args.samples / args.classes;
    // Low-rank noise keeps a within-class nullspace when samples outnumber
    // dimensions.
    let noise_rank = (args.dim / 5).max(1);
    let data = synth_low_rank_noise(args.classes, per_class, args.dim, 1.0, 20.0, noise_rank, args.seed)?;
    let first_of_class: Vec<usize> = (0..args.classes).map(|c| c * per_class).collect();
    let queries = data.features().select_rows(&first_of_class);
    let config = args.model_opts.config();

    let mut out = String::from("n,c,d,repeat,fit_seconds,transform_seconds\n");
    let (mut fits, mut transforms) = (vec![], vec![]);
    for r in 0..args.repeats {
        let start = Instant::now();
        let model = nk3ml_fit(&data, &config)?;
        let fit = start.elapsed().as_secs_f64();
        let start = Instant::now();
        model.transform_rows(&queries)?;
        let tr = start.elapsed().as_secs_f64();
        writeln!(out, "{},{},{},{r},{fit:.6},{tr:.6}", args.samples, args.classes, args.dim).unwrap();
        fits.push(fit);
        transforms.push(tr);
    }
    let (fm, fs) = mean_std(&fits);
    let (tm, ts) = mean_std(&transforms);
    eprintln!("fit: {fm:.4} s (sd {fs:.4}), transform of {} queries: {tm:.4} s (sd {ts:.4})", args.classes);
    emit(args.out.as_deref(), &out)
}
