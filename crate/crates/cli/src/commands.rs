use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, bail, ensure, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use trajkernel::baselines::{pairwise_matrix, Measure};
use trajkernel::data::{
    augment_order_dimension, generate_synthetic, load_dataset, min_max_normalize, save_dataset, FileFormat,
    Selection, SyntheticSpec,
};
use trajkernel::dist::{self, GDKParams, MeanMapVector};
use trajkernel::eval::{self, precision_at_k, Ranking};
use trajkernel::tidkc::{cluster_timed, TidkcParams};
use trajkernel::{IKParams, IsolationKernelModel, KernelTag, Label, TrajectoryDataset};
use trajkernel_bench::{scaleup_run, write_csv, ScaleupConfig};

use crate::output::Outputs;
use crate::*;

pub fn run(cli: Cli) -> Result<String> {
    if let Some(n) = cli.threads {
        ensure!(n >= 1, "--threads must be >= 1");
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot configure the thread pool")?;
    }
    let ctx = Run {
        seed: cli.seed,
        threads: rayon::current_num_threads(),
    };
    match cli.command {
        Command::Synth(a) => {
            let mut out = Outputs::files();
            finish(synth(&ctx, a, &mut out), out)
        }
        Command::Embed(a) => with_dir(&a.out.clone(), |out| embed(&ctx, a, out)),
        Command::Matrix(a) => with_dir(&a.out.clone(), |out| matrix(&ctx, a, out)),
        Command::Cluster(a) => with_dir(&a.out.clone(), |out| cluster(&ctx, a, out)),
        Command::Retrieve(a) => with_dir(&a.out.clone(), |out| retrieve(&ctx, a, out)),
        Command::Eval(a) => with_dir(&a.out.clone(), |out| evaluate(&ctx, a, out)),
        Command::Bench(a) => with_dir(&a.out.clone(), |out| bench(&ctx, a, out)),
    }
}

struct Run {
    seed: u64,
    threads: usize,
}

impl Run {
    fn metadata(&self, command: &str) -> serde_json::Map<String, Value> {
        let mut m = serde_json::Map::new();
        m.insert("command".into(), json!(command));
        m.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
        m.insert("seed".into(), json!(self.seed));
        m.insert("threads".into(), json!(self.threads));
        m
    }
}

fn with_dir(dir: &Path, f: impl FnOnce(&mut Outputs) -> Result<String>) -> Result<String> {
    let mut out = Outputs::dir(dir)?;
    let result = f(&mut out);
    finish(result, out)
}

fn finish(result: Result<String>, out: Outputs) -> Result<String> {
    if result.is_err() {
        out.discard();
    }
    result
}

/// Loaded, optionally normalized and order-augmented input.
fn load(args: &InputArgs) -> Result<TrajectoryDataset> {
    let mut ds = load_dataset(&args.input, FileFormat::from_path(&args.input)).map_err(|e| match e {
        // Already names the path.
        trajkernel::Error::Io { .. } => anyhow::Error::new(e),
        e => anyhow::Error::new(e).context(format!("cannot load {}", args.input.display())),
    })?;
    if !args.no_normalize {
        ds = min_max_normalize(&ds);
    }
    if let Some(w) = args.order_weight {
        ds = augment_order_dimension(&ds, w)?;
    }
    Ok(ds)
}

fn input_metadata(meta: &mut serde_json::Map<String, Value>, args: &InputArgs, ds: &TrajectoryDataset) {
    meta.insert("input".into(), json!(args.input.display().to_string()));
    meta.insert("n".into(), json!(ds.len()));
    meta.insert("dims".into(), json!(ds.dims()));
    meta.insert("normalized".into(), json!(!args.no_normalize));
    meta.insert("order_weight".into(), json!(args.order_weight));
}

fn ik_params(args: IkArgs, seed: u64) -> Result<IKParams> {
    Ok(IKParams::new(args.psi, args.t, seed)?)
}

fn gdk_params<P: AsRef<[f64]>>(points: &[P], args: GdkArgs, seed: u64) -> Result<GDKParams> {
    let mut p = GDKParams::auto(points, seed)?;
    if let Some(g) = args.gamma {
        p.gamma = g;
    }
    if let Some(m) = args.nystrom_samples {
        p.nystrom_samples = m;
        p.nystrom_rank = m;
    }
    if let Some(l) = args.nystrom_rank {
        p.nystrom_rank = l;
    }
    p.validate()?;
    Ok(p)
}

/// Level-1 style mean maps of every trajectory, kernel fit on the pooled points.
fn mean_maps(ds: &TrajectoryDataset, kernel: KernelArg, ik: IkArgs, gdk: GdkArgs, seed: u64) -> Result<(Vec<MeanMapVector>, String)> {
    let pooled = ds.pooled_points();
    match kernel {
        KernelArg::Idk => {
            let model = IsolationKernelModel::fit(&pooled, ik_params(ik, seed)?)?;
            Ok((dist::embed_dataset_idk(&model, ds)?, model.to_json()))
        }
        KernelArg::Gdk => {
            let map = dist::gdk_fit_nystrom(&pooled, gdk_params(&pooled, gdk, seed)?)?;
            Ok((dist::embed_dataset_gdk(&map, ds)?, map.to_json()))
        }
    }
}

fn synth(ctx: &Run, a: SynthArgs, out: &mut Outputs) -> Result<String> {
    let spec = match &a.spec {
        Some(path) => SyntheticSpec::load(path)?,
        None => preset_spec(&a.preset),
    };
    let ds = generate_synthetic(&spec, ctx.seed)?;
    let path = out.path(&a.out.display().to_string());
    save_dataset(&ds, &path, FileFormat::from_path(&path))?;
    let mut meta = ctx.metadata("synth");
    meta.insert("n".into(), json!(ds.len()));
    meta.insert("labels".into(), json!(spec.label_count()));
    meta.insert("spec".into(), serde_json::to_value(&spec)?);
    out.write_json(&format!("{}.meta.json", a.out.display()), &meta)?;
    Ok(format!(
        "wrote {} trajectories with {} labels to {}",
        ds.len(),
        spec.label_count(),
        a.out.display()
    ))
}

fn preset_spec(p: &PresetArgs) -> SyntheticSpec {
    match p.preset {
        Preset::Separated => SyntheticSpec::separated_lines(p.clusters, p.per_cluster, p.noise),
        Preset::DirectionPairs => SyntheticSpec::direction_pairs(p.clusters, p.per_cluster, p.noise),
    }
}

fn embed(ctx: &Run, a: EmbedArgs, out: &mut Outputs) -> Result<String> {
    let ds = load(&a.input)?;
    let (maps, model) = mean_maps(&ds, a.kernel, a.ik, a.gdk, ctx.seed)?;
    dist::write_embeddings_csv(&ds.ids(), &maps, out.create("embeddings.csv")?)?;
    let mut w = out.create("model.json")?;
    w.write_all(model.as_bytes())?;
    w.flush()?;
    let mut meta = ctx.metadata("embed");
    input_metadata(&mut meta, &a.input, &ds);
    meta.insert("kernel".into(), json!(format!("{:?}", a.kernel).to_lowercase()));
    meta.insert("embedding_dim".into(), json!(maps.first().map_or(0, MeanMapVector::dim)));
    out.write_json("metadata.json", &meta)?;
    Ok(format!(
        "embedded {} trajectories into {} dimensions",
        ds.len(),
        maps.first().map_or(0, MeanMapVector::dim)
    ))
}

fn measure(kind: MeasureArg, band: Option<usize>, ik: IkArgs, gdk: GdkArgs, ds: &TrajectoryDataset, seed: u64) -> Result<Measure> {
    Ok(match kind {
        MeasureArg::Hausdorff => Measure::Hausdorff,
        MeasureArg::Dtw => Measure::Dtw { band },
        MeasureArg::Idk => Measure::IdkDistance {
            ik: ik_params(ik, seed)?,
        },
        MeasureArg::Gdk => Measure::GdkDistance {
            params: Some(gdk_params(&ds.pooled_points(), gdk, seed)?),
            rng_seed: seed,
        },
    })
}

fn matrix(ctx: &Run, a: MatrixArgs, out: &mut Outputs) -> Result<String> {
    let ds = load(&a.input)?;
    let m = measure(a.measure, a.band, a.ik, a.gdk, &ds, ctx.seed)?;
    let dm = pairwise_matrix(&ds, &m)?;
    dm.write_csv(out.create("matrix.csv")?)?;
    let mut meta = ctx.metadata("matrix");
    input_metadata(&mut meta, &a.input, &ds);
    meta.insert("measure".into(), serde_json::to_value(&m)?);
    out.write_json("metadata.json", &meta)?;
    Ok(format!("wrote {0}x{0} {1} distance matrix", dm.len(), m.name()))
}

fn tidkc_params(k: usize, a: &TidkcArgs, seed: u64) -> TidkcParams {
    let mut p = TidkcParams::new(k, seed);
    p.rho = a.rho;
    p.tau_floor = a.tau_floor;
    p.level1.psi = a.psi1;
    p.level1.t = a.t1;
    p.level2.psi = a.psi2;
    p.level2.t = a.t2;
    p.seed_subset = a.seed_subset;
    p.knn_for_contrast = a.knn;
    p.kernel1 = match a.kernel1 {
        KernelArg::Idk => KernelTag::Idk,
        KernelArg::Gdk => KernelTag::GdkNystrom,
    };
    p.kernel2 = match a.algo {
        Algo::Tidkc => KernelTag::Idk,
        Algo::Tgdkc => KernelTag::GdkNystrom,
    };
    p
}

fn cluster(ctx: &Run, a: ClusterArgs, out: &mut Outputs) -> Result<String> {
    let ds = load(&a.input)?;
    ensure!(
        a.k <= ds.len(),
        "k = {} exceeds the number of trajectories ({})",
        a.k,
        ds.len()
    );
    let params = tidkc_params(a.k, &a.tidkc, ctx.seed);
    params.validate()?;
    let (result, timings) = cluster_timed(&ds, &params)?;

    let mut w = csv::Writer::from_writer(out.create("labels.csv")?);
    w.write_record(["id", "cluster"])?;
    for (t, l) in ds.iter().zip(&result.labels) {
        w.write_record([t.id(), &l.to_string()])?;
    }
    w.flush()?;

    let mut meta = ctx.metadata("cluster");
    input_metadata(&mut meta, &a.input, &ds);
    meta.insert("algo".into(), json!(format!("{:?}", a.tidkc.algo).to_lowercase()));
    meta.insert("params".into(), serde_json::to_value(&params)?);
    meta.insert("iterations".into(), json!(result.iterations));
    meta.insert("objective".into(), json!(result.objective));
    meta.insert("residual".into(), json!(result.residual));
    meta.insert("seeds".into(), json!(result.seeds));
    meta.insert("history".into(), serde_json::to_value(&result.history)?);
    let mut scores = String::new();
    if a.eval {
        let truth = ds
            .labels()
            .ok_or_else(|| anyhow!("--eval needs every trajectory in the input to carry a label"))?;
        let nmi = eval::nmi(&truth, &result.labels)?;
        let ari = eval::ari(&truth, &result.labels)?;
        meta.insert("nmi".into(), json!(nmi));
        meta.insert("ari".into(), json!(ari));
        scores = format!(" (NMI {nmi:.4}, ARI {ari:.4})");
    }
    out.write_json("metadata.json", &meta)?;

    let mut w = csv::Writer::from_writer(out.create("timings.csv")?);
    w.write_record(["phase", "seconds"])?;
    for (phase, d) in [
        ("build_ik", timings.build_ik),
        ("feature_map", timings.feature_map),
        ("seed_selection", timings.seed_selection),
        ("growing", timings.growing),
        ("final_assign", timings.final_assign),
        ("total", timings.total),
    ] {
        w.write_record([phase.to_string(), format!("{:.6}", d.as_secs_f64())])?;
    }
    w.flush()?;
    Ok(format!(
        "clustered {} trajectories into {} clusters in {} iterations{scores}",
        ds.len(),
        a.k,
        result.iterations
    ))
}

fn retrieve(ctx: &Run, a: RetrieveArgs, out: &mut Outputs) -> Result<String> {
    let ds = load(&a.input)?;
    let labels = ds
        .labels()
        .ok_or_else(|| anyhow!("retrieval needs every trajectory in the input to carry a label"))?;
    let curve = match a.measure {
        RetrieveMeasure::Idk | RetrieveMeasure::Gdk => {
            let kernel = if a.measure == RetrieveMeasure::Idk {
                KernelArg::Idk
            } else {
                KernelArg::Gdk
            };
            let (maps, _) = mean_maps(&ds, kernel, a.ik, a.gdk, ctx.seed)?;
            precision_at_k(Ranking::Embeddings(&maps), &labels, &a.ks)?
        }
        RetrieveMeasure::Hausdorff | RetrieveMeasure::Dtw => {
            let kind = if a.measure == RetrieveMeasure::Hausdorff {
                MeasureArg::Hausdorff
            } else {
                MeasureArg::Dtw
            };
            let dm = pairwise_matrix(&ds, &measure(kind, a.band, a.ik, a.gdk, &ds, ctx.seed)?)?;
            precision_at_k(Ranking::Distances(&dm), &labels, &a.ks)?
        }
        RetrieveMeasure::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
            let sim: Vec<f64> = (0..ds.len() * ds.len()).map(|_| rng.random::<f64>()).collect();
            precision_at_k(Ranking::Similarities(&sim), &labels, &a.ks)?
        }
    };
    curve.write_csv(out.create("precision.csv")?)?;
    let mut meta = ctx.metadata("retrieve");
    input_metadata(&mut meta, &a.input, &ds);
    meta.insert("measure".into(), json!(format!("{:?}", a.measure).to_lowercase()));
    meta.insert("curve".into(), serde_json::to_value(&curve)?);
    out.write_json("metadata.json", &meta)?;
    let summary: Vec<String> = curve
        .ks
        .iter()
        .zip(&curve.precision)
        .map(|(k, p)| format!("P@{k}={p:.4}"))
        .collect();
    Ok(summary.join(" "))
}

fn read_predictions(path: &Path, ds: &TrajectoryDataset) -> Result<Vec<Label>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut by_id = HashMap::new();
    for row in r.records() {
        let row = row?;
        ensure!(row.len() >= 2, "{}: expected `id,cluster` rows", path.display());
        let cluster: Label = row[1]
            .trim()
            .parse()
            .with_context(|| format!("{}: bad cluster `{}`", path.display(), &row[1]))?;
        by_id.insert(row[0].to_string(), cluster);
    }
    ds.iter()
        .map(|t| {
            by_id
                .get(t.id())
                .copied()
                .ok_or_else(|| anyhow!("{}: no label for trajectory `{}`", path.display(), t.id()))
        })
        .collect()
}

fn evaluate(ctx: &Run, a: EvalArgs, out: &mut Outputs) -> Result<String> {
    let ds = load(&a.input)?;
    let truth = ds
        .labels()
        .ok_or_else(|| anyhow!("evaluation needs every trajectory in the input to carry a label"))?;
    let mut meta = ctx.metadata("eval");
    input_metadata(&mut meta, &a.input, &ds);
    if let Some(path) = &a.labels {
        let pred = read_predictions(path, &ds)?;
        let nmi = eval::nmi(&truth, &pred)?;
        let ari = eval::ari(&truth, &pred)?;
        meta.insert("labels".into(), json!(path.display().to_string()));
        meta.insert("nmi".into(), json!(nmi));
        meta.insert("ari".into(), json!(ari));
        out.write_json("metrics.json", &meta)?;
        return Ok(format!("NMI {nmi:.4} ARI {ari:.4}"));
    }
    ensure!(!a.rates.is_empty(), "give either --labels or --rates");
    let k = a.k.ok_or_else(|| anyhow!("--rates needs -k"))?;
    let params = tidkc_params(k, &a.tidkc, ctx.seed);
    let selections = match a.selection {
        SelectionArg::All => vec![Selection::All],
        SelectionArg::Half => vec![Selection::HalfPerCluster],
        SelectionArg::Both => vec![Selection::All, Selection::HalfPerCluster],
    };
    let rows = eval::run_sampling_sweep(&ds, &a.rates, &selections, &params, ctx.seed)?;
    let mut w = csv::Writer::from_writer(out.create("sweep.csv")?);
    w.write_record(["selection", "rate", "nmi"])?;
    for r in &rows {
        let sel = if r.selection == Selection::All { "all" } else { "half" };
        w.write_record([sel.to_string(), r.rate.to_string(), r.nmi.to_string()])?;
    }
    w.flush()?;
    meta.insert("params".into(), serde_json::to_value(&params)?);
    meta.insert("sweep".into(), serde_json::to_value(&rows)?);
    out.write_json("metrics.json", &meta)?;
    Ok(format!("sampling sweep: {} rows", rows.len()))
}

fn bench(ctx: &Run, a: BenchArgs, out: &mut Outputs) -> Result<String> {
    let base = match &a.input {
        Some(path) => load(&InputArgs {
            input: path.clone(),
            no_normalize: false,
            order_weight: None,
        })?,
        None => min_max_normalize(&generate_synthetic(&preset_spec(&a.preset), ctx.seed)?),
    };
    let k = match a.k {
        Some(k) => k,
        None => {
            let mut labels = base.labels().unwrap_or_default();
            labels.sort_unstable();
            labels.dedup();
            labels.len().max(2)
        }
    };
    let mut config = ScaleupConfig::new(k, ctx.seed);
    config.reps = a.reps;
    config.jitter = a.jitter;
    // A fixed seed subsample keeps the quadratic seed-selection term constant.
    config.tidkc.seed_subset = Some(base.len().min(trajkernel::tidkc::DEFAULT_SEED_SUBSET));
    let mut records = Vec::new();
    for &target in &a.target {
        records.extend(scaleup_run(&base, &a.multipliers, target, &config)?);
    }
    write_csv(&records, out.create("timings.csv")?)?;
    let mut meta = ctx.metadata("bench");
    meta.insert("base_n".into(), json!(base.len()));
    meta.insert(
        "targets".into(),
        json!(a.target.iter().map(|t| t.name()).collect::<Vec<_>>()),
    );
    meta.insert("multipliers".into(), json!(a.multipliers));
    meta.insert("reps".into(), json!(a.reps));
    meta.insert("jitter".into(), json!(a.jitter));
    meta.insert("k".into(), json!(k));
    out.write_json("metadata.json", &meta)?;
    if records.is_empty() {
        bail!("no timing records produced");
    }
    Ok(format!("wrote {} timing records", records.len()))
}
