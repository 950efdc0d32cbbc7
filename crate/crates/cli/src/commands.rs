use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use depthbench_core::bench::{time_model, Statistic};
use depthbench_core::data::{self, DatasetIndex};
use depthbench_core::engine::{tcl_tiny, GraphSpec, KernelPath, Model, ModelOptions, WeightStore};
use depthbench_core::metrics::{
    evaluate_batch, final_score, rank_entries, Aggregation, EvalPair, LeaderboardEntry, RankedEntry, ScoreParams,
};
use depthbench_core::{DepthMap, Error, RgbImage};

use crate::config::{Config, Overrides};
use crate::{
    AggregationArg, BenchArgs, Cli, Command, EvaluateArgs, Failure, GenWeightsArgs, InferArgs, KernelArg,
    LeaderboardArgs, ModelArgs, ScoreArgs, StatisticArg,
};

pub const LEADERBOARD_SCHEMA: &str = "depthbench-leaderboard/1";
const BUILTIN_PREFIX: &str = "builtin:";

pub fn run(cli: Cli) -> Result<(), Failure> {
    let flags = Overrides {
        data_dir: cli.data_dir,
        unit_scale: cli.unit_scale,
        seed: cli.seed,
    };
    let cfg = Config::resolve(cli.config.as_deref(), &flags)?;
    match cli.command {
        Command::Evaluate(a) => evaluate(&cfg, a),
        Command::Score(a) => score(&cfg, a),
        Command::Leaderboard(a) => leaderboard(&cfg, a),
        Command::Infer(a) => infer(&cfg, a),
        Command::Bench(a) => bench(a),
        Command::GenWeights(a) => gen_weights(&cfg, a),
        Command::ShowConfig => {
            let text = serde_json::to_string_pretty(&cfg).map_err(|e| Failure::usage(e.to_string()))?;
            println!("{text}");
            Ok(())
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::data(format!("cannot write {}: {e}", path.display())))
}

fn evaluate(cfg: &Config, a: EvaluateArgs) -> Result<(), Failure> {
    let scale = cfg.unit_scale;
    let preds = data::load_depth_dir(&a.pred_dir, scale, |p, s| data::load_prediction16(p, s))?;
    let gts: BTreeMap<String, DepthMap> = match (&a.gt_dir, &a.manifest) {
        (Some(dir), _) => data::load_depth_dir(dir, scale, |p, s| data::load_depth16(p, s))?,
        (None, Some(m)) => DatasetIndex::from_manifest(m)?
            .entries()
            .iter()
            .map(|e| Ok((e.image_id.clone(), data::load_depth16(&e.depth_path, scale)?)))
            .collect::<Result<_, Error>>()?,
        (None, None) => match &cfg.data_dir {
            Some(root) => data::load_depth_dir(root.join("depth"), scale, |p, s| data::load_depth16(p, s))?,
            None => {
                return Err(Failure::usage(
                    "ground truth needed: pass --gt-dir or --manifest, or set a data directory",
                ))
            }
        },
    };
    let unpaired: Vec<&str> = preds
        .keys()
        .filter(|k| !gts.contains_key(*k))
        .chain(gts.keys().filter(|k| !preds.contains_key(*k)))
        .map(String::as_str)
        .collect();
    if !unpaired.is_empty() {
        return Err(Failure::data(format!("unpaired image ids: {}", unpaired.join(", "))));
    }
    let pairs: Vec<EvalPair> = gts
        .into_iter()
        .map(|(image_id, gt)| EvalPair {
            pred: preds[&image_id].clone(),
            image_id,
            gt,
        })
        .collect();
    if pairs.is_empty() {
        return Err(Failure::data("no images to evaluate"));
    }
    let aggregation = match a.aggregation {
        AggregationArg::PixelPooled => Aggregation::PixelPooled,
        AggregationArg::PerImageMean => Aggregation::PerImageMean,
    };
    let report = evaluate_batch(&pairs, aggregation)?;
    fs::create_dir_all(&a.out).map_err(|e| Failure::data(format!("cannot create {}: {e}", a.out.display())))?;
    write_file(&a.out.join("report.json"), &report.to_json()?)?;
    write_file(&a.out.join("report.csv"), &report.to_csv_string()?)?;
    println!(
        "images={} pixels={} si_rmse={:.6} rmse={:.6} log10={:.6} rel={:.6}",
        report.per_image.len(),
        report.n_valid,
        report.si_rmse,
        report.rmse,
        report.log10,
        report.rel
    );
    if report.clamped_pixels > 0 {
        eprintln!(
            "warning: {} non-positive predictions clamped for log metrics",
            report.clamped_pixels
        );
    }
    Ok(())
}

fn score_params(cfg: &Config, c: Option<f64>) -> Result<ScoreParams, Failure> {
    match c {
        Some(c) => ScoreParams::new(c).map_err(|e| Failure::usage(e.to_string())),
        None => Ok(cfg.score_params()),
    }
}

fn score(cfg: &Config, a: ScoreArgs) -> Result<(), Failure> {
    let params = score_params(cfg, a.c)?;
    let s = final_score(a.si_rmse, a.runtime_ms, &params).map_err(|e| Failure::usage(e.to_string()))?;
    println!("{s:.6}");
    Ok(())
}

fn render_table(ranked: &[RankedEntry]) -> String {
    let name_w = ranked.iter().map(|r| r.name.len()).max().unwrap_or(0).max(4);
    let mut out = format!(
        "{:>4}  {:<name_w$}  {:>8}  {:>10}  {:>10}\n",
        "rank", "name", "si_rmse", "runtime_ms", "score"
    );
    for r in ranked {
        out += &format!(
            "{:>4}  {:<name_w$}  {:>8.4}  {:>10.1}  {:>10.2}\n",
            r.rank, r.name, r.si_rmse, r.runtime_ms, r.score
        );
    }
    out
}

fn leaderboard(cfg: &Config, a: LeaderboardArgs) -> Result<(), Failure> {
    let params = score_params(cfg, a.c)?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(&a.input)
        .map_err(|e| Failure::data(format!("{}: {e}", a.input.display())))?;
    let entries = reader
        .deserialize::<LeaderboardEntry>()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::data(format!("{}: {e}", a.input.display())))?;
    if entries.is_empty() {
        return Err(Failure::data(format!("{}: no rows", a.input.display())));
    }
    let ranked = rank_entries(&entries, &params).map_err(|e| Failure::data(e.to_string()))?;
    print!("{}", render_table(&ranked));
    if let Some(out) = &a.out {
        let mut text = format!("# schema={LEADERBOARD_SCHEMA} c={:e}\n", params.normalization_c());
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &ranked {
            w.serialize(r).map_err(|e| Failure::data(e.to_string()))?;
        }
        let body = w.into_inner().map_err(|e| Failure::data(e.to_string()))?;
        text.push_str(&String::from_utf8(body).expect("csv output is utf-8"));
        write_file(out, &text)?;
    }
    Ok(())
}

fn model_failure(e: Error) -> Failure {
    Failure {
        code: 3,
        message: e.to_string(),
    }
}

fn load_graph(spec: &str) -> Result<GraphSpec, Failure> {
    match spec.strip_prefix(BUILTIN_PREFIX) {
        Some("tcl-tiny") => Ok(tcl_tiny()),
        Some(other) => Err(Failure::usage(format!("unknown builtin graph `{other}`"))),
        None => GraphSpec::load(spec).map_err(model_failure),
    }
}

fn load_model(a: &ModelArgs) -> Result<Model, Failure> {
    let graph = load_graph(&a.graph)?;
    let weights = WeightStore::load(&a.weights).map_err(model_failure)?;
    let options = ModelOptions {
        kernels: match a.kernels {
            KernelArg::Naive => KernelPath::Naive,
            KernelArg::Optimized => KernelPath::Optimized,
        },
        collapse_clb: !a.no_collapse,
    };
    Ok(Model::new(graph, &weights, options)?)
}

fn infer(cfg: &Config, a: InferArgs) -> Result<(), Failure> {
    let model = load_model(&a.model)?;
    let image = data::load_rgb(&a.input)?;
    let depth = model.run(&image)?;
    data::save_depth16(&depth, &a.output, cfg.unit_scale)?;
    let v = depth.values();
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    println!(
        "{}x{} depth: min={min:.4} max={max:.4} mean={mean:.4}",
        depth.width(),
        depth.height()
    );
    Ok(())
}

fn bench(a: BenchArgs) -> Result<(), Failure> {
    let model = load_model(&a.model)?;
    let image = match &a.input {
        Some(p) => data::load_rgb(p)?,
        None => {
            let [_, h, w, _] = model.graph().input().shape;
            RgbImage::new(h, w, vec![0.5; h * w * 3])?
        }
    };
    let statistic = match a.statistic {
        StatisticArg::P50 => Statistic::P50,
        StatisticArg::Mean => Statistic::Mean,
    };
    let report = time_model(&model, &image, a.runs, a.warmup)?.with_statistic(statistic);
    println!(
        "runs={} warmup={} p50={:.3}ms p90={:.3}ms p99={:.3}ms mean={:.3}ms min={:.3}ms",
        report.samples_ms.len(),
        report.warmup_count,
        report.p50,
        report.p90,
        report.p99,
        report.mean,
        report.min
    );
    if let Some(out) = &a.out {
        write_file(out, &report.to_json()?)?;
    }
    Ok(())
}

fn gen_weights(cfg: &Config, a: GenWeightsArgs) -> Result<(), Failure> {
    let graph = load_graph(&a.graph)?;
    let store = if a.zeros {
        WeightStore::zeros_for(&graph)
    } else {
        WeightStore::random_for(&graph, cfg.seed)
    };
    store.save(&a.out)?;
    let params: usize = store.iter().map(|(_, t)| t.len()).sum();
    println!("{} tensors, {params} parameters", store.len());
    Ok(())
}
