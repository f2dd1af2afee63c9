//! Command-line interface: synthetic generation, vote aggregation,
//! consensus dumps, pose inference, evaluation, and self tests.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use posevote::config::RunConfig;
use posevote::consensus;
use posevote::format::{self, FloatGrid, PoseRecord, VoterFieldFile};
use posevote::geometry::VoteKernel;
use posevote::metrics::{self, EvalSample, PCKH_GROUPS, PCP_LIMBS};
use posevote::mrf;
use posevote::pipeline::{self, PersonHint, PriorSet, Skeleton};
use posevote::synth::{self, Scene, SynthNoise};
use posevote::voting;
use posevote::{Error, Result};

#[derive(Parser)]
#[command(name = "posevote", version, about = "Consensus-voting pose estimation")]
struct Cli {
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic voter-field file from a random pose.
    Synth(SynthArgs),
    /// Aggregate voter fields into per-keypoint heatmap grids.
    Aggregate(AggregateArgs),
    /// Dump the consensus joint table (and a conditional) for a keypoint pair.
    Consensus(ConsensusArgs),
    /// Estimate a pose from a voter-field file.
    Infer(InferArgs),
    /// Evaluate predictions against annotations (PCKh / PCP).
    Eval(EvalArgs),
    /// Run randomized oracle-equivalence suites.
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output voter-field file.
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth annotations (JSON lines) to write alongside.
    #[arg(long)]
    annotations_out: Option<PathBuf>,
    #[arg(long, default_value_t = 192)]
    width: usize,
    #[arg(long, default_value_t = 192)]
    height: usize,
    /// Person scale in pixels.
    #[arg(long, default_value_t = 60.0)]
    scale: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Probability of replacing a vote with a random class.
    #[arg(long, default_value_t = 0.0)]
    label_noise: f64,
    /// Probability of replacing a vote with background.
    #[arg(long, default_value_t = 0.0)]
    background: f64,
    /// Number of random distractor poses.
    #[arg(long, default_value_t = 0)]
    distractors: usize,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct AggregateArgs {
    /// Input voter-field file.
    #[arg(long)]
    fields: PathBuf,
    /// Directory for the heatmap grid files.
    #[arg(long)]
    out_dir: PathBuf,
    /// Only this keypoint id (default: all).
    #[arg(long)]
    keypoint: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ConsensusArgs {
    #[arg(long)]
    fields: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Keypoint pair, e.g. "12,11".
    #[arg(long, value_parser = parse_pair)]
    pair: (usize, usize),
    /// Coarse cell "row,col" of the second keypoint to condition on.
    #[arg(long, value_parser = parse_pair)]
    given: Option<(usize, usize)>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    fields: PathBuf,
    /// Output pose record (JSON lines).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Person center "x,y" in pixels, for the mid-body mask.
    #[arg(long, value_parser = parse_pair_f64)]
    person_center: Option<(f64, f64)>,
    /// Person scale in pixels (requires --person-center).
    #[arg(long)]
    person_scale: Option<f64>,
    /// Override the consensus/prior mixing weight.
    #[arg(long)]
    lambda: Option<f64>,
    /// Solve all keypoints jointly instead of in stages.
    #[arg(long)]
    single_stage: bool,
    #[arg(long, default_value_t = 0)]
    person_id: u64,
}

#[derive(Args)]
struct EvalArgs {
    /// Predictions (JSON lines), matched to annotations by person id.
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Comma-separated thresholds for a PCKh sweep.
    #[arg(long)]
    pckh_sweep: Option<String>,
    /// Machine-readable key=value report file.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_pair(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected two comma-separated values")?;
    Ok((
        a.trim().parse().map_err(|e| format!("{e}"))?,
        b.trim().parse().map_err(|e| format!("{e}"))?,
    ))
}

fn parse_pair_f64(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected two comma-separated values")?;
    Ok((
        a.trim().parse().map_err(|e| format!("{e}"))?,
        b.trim().parse().map_err(|e| format!("{e}"))?,
    ))
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("error: threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Aggregate(args) => cmd_aggregate(args),
        Command::Consensus(args) => cmd_consensus(args),
        Command::Infer(args) => cmd_infer(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Selftest(args) => cmd_selftest(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // machine-readable: "error: <kind>: <detail>"
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let config = load_config(&args.config)?;
    config.validate()?;
    let grid = config.grid()?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let margin = 0.9 * args.scale;
    let span_x = args.width as f64 - 2.0 * margin;
    let span_y = args.height as f64 - 2.0 * margin;
    if span_x <= 0.0 || span_y <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "image {}x{} too small for scale {}",
            args.width, args.height, args.scale
        )));
    }
    use rand::Rng;
    let random_center =
        move |rng: &mut ChaCha8Rng| -> (f64, f64) {
            (
                margin + rng.gen::<f64>() * span_x,
                margin + rng.gen::<f64>() * span_y,
            )
        };
    let center = random_center(&mut rng);
    let pose = synth::random_pose(&mut rng, center, args.scale)?;
    let mut scene = Scene::single(pose.clone());
    for _ in 0..args.distractors {
        let c = random_center(&mut rng);
        scene.poses.push(synth::random_pose(&mut rng, c, args.scale)?);
    }
    let noise = SynthNoise {
        label_noise: args.label_noise,
        background: args.background,
    };
    let fields = synth::gen_synthetic(
        &scene,
        args.height,
        args.width,
        config.stride,
        &grid,
        noise,
        &mut rng,
    )?;
    VoterFieldFile::new(args.height, args.width, config.stride, grid, fields)?.save(&args.out)?;
    if let Some(path) = &args.annotations_out {
        let points: Vec<Option<(f64, f64)>> = pose[..pipeline::NUM_ANNOTATED]
            .iter()
            .map(|&p| Some(p))
            .collect();
        let mut record = PoseRecord::from_points16(args.seed, &points);
        let (ht, un) = synth::head_segment(&pose);
        record.head_rect = Some([ht.0, ht.1, un.0, un.1]);
        record.scale = Some(args.scale);
        record.position = Some([pose[pipeline::MID_BODY].0, pose[pipeline::MID_BODY].1]);
        format::save_records(path, &[record])?;
    }
    println!(
        "synth: wrote {} ({}x{}, seed {}, {} distractors)",
        args.out.display(),
        args.width,
        args.height,
        args.seed,
        args.distractors
    );
    Ok(())
}

fn cmd_aggregate(args: AggregateArgs) -> Result<()> {
    let config = load_config(&args.config)?;
    let file = VoterFieldFile::load(&args.fields)?;
    let kernel = VoteKernel::build(&file.grid, config.kernel_size, config.kernel_size)?;
    std::fs::create_dir_all(&args.out_dir)?;
    for field in &file.fields {
        if args.keypoint.is_some_and(|k| k != field.keypoint_id) {
            continue;
        }
        let heat = voting::aggregate(field, &kernel)?;
        let mut grid = FloatGrid::new(
            format!("heatmap/{}", field.keypoint_id),
            heat.height,
            heat.width,
            heat.values.clone(),
        )?;
        grid.metadata
            .insert("keypoint".into(), field.keypoint_id.to_string());
        grid.metadata
            .insert("origin".into(), format!("{},{}", heat.origin.0, heat.origin.1));
        grid.metadata.insert("stride".into(), field.stride.to_string());
        let path = args.out_dir.join(format!("heatmap_{:02}.pvg", field.keypoint_id));
        grid.save(&path)?;
        println!("aggregate: keypoint {} sum {:.6} -> {}", field.keypoint_id, heat.sum(), path.display());
    }
    Ok(())
}

fn cmd_consensus(args: ConsensusArgs) -> Result<()> {
    let config = load_config(&args.config)?;
    let file = VoterFieldFile::load(&args.fields)?;
    let (i, j) = args.pair;
    let field_of = |id: usize| {
        file.fields
            .iter()
            .find(|f| f.keypoint_id == id)
            .ok_or_else(|| Error::InvalidArgument(format!("no field for keypoint {id}")))
    };
    let coarse_i =
        consensus::coarse_project(field_of(i)?, config.coarse_factor, config.kept_rings, &file.grid)?;
    let coarse_j =
        consensus::coarse_project(field_of(j)?, config.coarse_factor, config.kept_rings, &file.grid)?;
    let pool = config.coarse_factor / config.stride;
    let coarse_grid = file.grid.coarse(config.kept_rings)?.rescaled(pool as f64)?;
    let half = coarse_grid.outer_radius().ceil() as usize;
    let kernel = VoteKernel::build(&coarse_grid, 2 * half + 1, 2 * half + 1)?;
    let joint = consensus::joint_table(&coarse_i, &coarse_j, &kernel)?;
    std::fs::create_dir_all(&args.out_dir)?;

    let cells = joint.cells();
    let mut grid = FloatGrid::new(format!("joint/{i}-{j}"), cells, cells, joint.values.clone())?;
    grid.metadata.insert("pair".into(), format!("{i},{j}"));
    grid.metadata
        .insert("grid".into(), format!("{}x{}", coarse_i.height, coarse_i.width));
    grid.metadata
        .insert("normalization".into(), format!("{}", joint.normalization));
    let joint_path = args.out_dir.join(format!("joint_{i:02}_{j:02}.pvg"));
    grid.save(&joint_path)?;
    println!("consensus: joint {i},{j} -> {}", joint_path.display());

    if let Some((row, col)) = args.given {
        if row >= coarse_j.height || col >= coarse_j.width {
            return Err(Error::OutOfBounds(format!(
                "given cell ({row}, {col}) outside {}x{}",
                coarse_j.height, coarse_j.width
            )));
        }
        let cond = consensus::conditional(&joint, (row, col))?;
        let mut grid = FloatGrid::new(
            format!("conditional/{i}|{j}"),
            cond.height,
            cond.width,
            cond.values.clone(),
        )?;
        grid.metadata.insert("given".into(), format!("{row},{col}"));
        let path = args.out_dir.join(format!("conditional_{i:02}_given_{j:02}.pvg"));
        grid.save(&path)?;
        let (ar, ac) = cond.argmax();
        println!("consensus: conditional argmax ({ar}, {ac}) -> {}", path.display());
    }
    Ok(())
}

fn cmd_infer(args: InferArgs) -> Result<()> {
    let mut config = load_config(&args.config)?;
    if let Some(lambda) = args.lambda {
        config.lambda = lambda;
    }
    if args.single_stage {
        config.single_stage = true;
    }
    config.validate()?;
    let file = VoterFieldFile::load(&args.fields)?;
    let person = match (args.person_center, args.person_scale) {
        (Some(center), Some(scale)) => Some(PersonHint { center, scale }),
        (None, None) => None,
        _ => {
            return Err(Error::InvalidArgument(
                "--person-center and --person-scale must be given together".into(),
            ))
        }
    };
    let estimate = pipeline::predict(
        &file.fields,
        &PriorSet::default(),
        person,
        &config,
        &Skeleton::default_skeleton(),
    )?;
    let points: Vec<Option<(f64, f64)>> = estimate.keypoints.iter().map(|&p| Some(p)).collect();
    let record = PoseRecord::from_points16(args.person_id, &points);
    format::save_records(&args.out, &[record])?;
    println!(
        "infer: wrote {} (stage energies {:?})",
        args.out.display(),
        estimate
            .stage_energies
            .iter()
            .map(|e| (e * 1e3).round() / 1e3)
            .collect::<Vec<_>>()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let predictions = format::load_records(&args.predictions)?;
    let annotations = format::load_records(&args.annotations)?;
    let by_id: BTreeMap<u64, &PoseRecord> =
        predictions.iter().map(|r| (r.person_id, r)).collect();
    let mut samples = Vec::new();
    for ann in &annotations {
        let Some(pred) = by_id.get(&ann.person_id) else {
            return Err(Error::InvalidArgument(format!(
                "no prediction for person {}",
                ann.person_id
            )));
        };
        samples.push(EvalSample {
            predictions: pred.points16(),
            annotations: ann.points16(),
            head_segment: ann.head_segment(),
        });
    }
    let pckh = metrics::pckh(&samples, args.alpha)?;
    let pcp = metrics::pcp(&samples)?;

    let mut report: Vec<(String, String)> = Vec::new();
    println!("PCKh@{}", args.alpha);
    for ((name, _), rate) in PCKH_GROUPS.iter().zip(&pckh.group_rates) {
        let text = rate.map_or("n/a".into(), |r| format!("{:.1}", 100.0 * r));
        println!("  {name:<10} {text:>6}");
        if let Some(r) = rate {
            report.push((format!("pckh.{name}"), format!("{r:.6}")));
        }
    }
    println!("  {:<10} {:>6.1}", "mean", 100.0 * pckh.mean);
    println!("  excluded samples: {}", pckh.excluded);
    report.push(("pckh.mean".into(), format!("{:.6}", pckh.mean)));
    report.push(("pckh.excluded".into(), pckh.excluded.to_string()));

    println!("PCP");
    for ((name, _), rate) in PCP_LIMBS.iter().zip(&pcp.limb_rates) {
        let text = rate.map_or("n/a".into(), |r| format!("{:.1}", 100.0 * r));
        println!("  {name:<10} {text:>6}");
        if let Some(r) = rate {
            report.push((format!("pcp.{name}"), format!("{r:.6}")));
        }
    }
    println!("  {:<10} {:>6.1}", "mean", 100.0 * pcp.mean);
    report.push(("pcp.mean".into(), format!("{:.6}", pcp.mean)));

    if let Some(spec) = &args.pckh_sweep {
        let alphas: Vec<f64> = spec
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidArgument(format!("bad threshold {s:?}: {e}")))
            })
            .collect::<Result<_>>()?;
        println!("PCKh sweep");
        for (alpha, rate) in metrics::pckh_sweep(&samples, &alphas)? {
            println!("  {alpha:.3} {:.4}", rate);
            report.push((format!("pckh.sweep.{alpha}"), format!("{rate:.6}")));
        }
    }
    if let Some(path) = &args.report {
        let mut text = String::new();
        for (k, v) in &report {
            text.push_str(&format!("{k}={v}\n"));
        }
        std::fs::write(path, text)?;
    }
    Ok(())
}

fn cmd_selftest(args: SelftestArgs) -> Result<()> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let grid = posevote::geometry::LogPolarGrid::default_grid();

    // aggregation oracle on random small fields
    let kernel = VoteKernel::build(&grid, config_kernel(), config_kernel())?;
    for trial in 0..20 {
        let h = rng.gen_range(4..=10);
        let w = rng.gen_range(4..=10);
        let field = random_field(&mut rng, h, w, grid.num_classes());
        let fast = voting::aggregate(&field, &kernel)?;
        let slow = voting::naive_aggregate(&field, &kernel)?;
        for (a, b) in fast.values.iter().zip(&slow.values) {
            if (a - b).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "selftest: aggregation mismatch on trial {trial}"
                )));
            }
        }
    }
    println!("selftest: aggregation oracle ok (20 trials)");

    // consensus oracle on the coarse grid
    let coarse_grid = grid.coarse(2)?.rescaled(3.0)?;
    let half = coarse_grid.outer_radius().ceil() as usize;
    let coarse_kernel = VoteKernel::build(&coarse_grid, 2 * half + 1, 2 * half + 1)?;
    for trial in 0..10 {
        let h = rng.gen_range(3..=6);
        let w = rng.gen_range(3..=6);
        let fi = random_coarse(&mut rng, h, w, coarse_grid.num_classes());
        let fj = random_coarse(&mut rng, h, w, coarse_grid.num_classes());
        let fast = consensus::joint_table(&fi, &fj, &coarse_kernel)?;
        let slow = consensus::naive_joint(&fi, &fj, &coarse_kernel)?;
        for (a, b) in fast.values.iter().zip(&slow.values) {
            if (a - b).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "selftest: consensus mismatch on trial {trial}"
                )));
            }
        }
    }
    println!("selftest: consensus oracle ok (10 trials)");

    // solver vs brute force on random trees
    for trial in 0..20 {
        let model = random_tree(&mut rng);
        let exact = mrf::brute_force_map(&model)?;
        let sol = mrf::trws_solve(&model, 100, 1e-9)?;
        if sol.energy != exact.energy {
            return Err(Error::InvalidArgument(format!(
                "selftest: solver mismatch on trial {trial}: {} vs {}",
                sol.energy, exact.energy
            )));
        }
    }
    println!("selftest: solver oracle ok (20 trials)");

    // end-to-end noiseless recovery
    let config = RunConfig::default();
    let pose = synth::random_pose(&mut rng, (96.0, 100.0), 55.0)?;
    let fields = synth::gen_synthetic(
        &Scene::single(pose.clone()),
        192,
        192,
        config.stride,
        &grid,
        SynthNoise::default(),
        &mut rng,
    )?;
    let estimate = pipeline::predict(
        &fields,
        &PriorSet::default(),
        None,
        &config,
        &Skeleton::default_skeleton(),
    )?;
    for kp in 0..pipeline::NUM_ANNOTATED {
        let dx = estimate.keypoints[kp].0 - pose[kp].0;
        let dy = estimate.keypoints[kp].1 - pose[kp].1;
        if dx.abs() > config.coarse_factor as f64 || dy.abs() > config.coarse_factor as f64 {
            return Err(Error::InvalidArgument(format!(
                "selftest: keypoint {kp} off by ({dx:.1}, {dy:.1})"
            )));
        }
    }
    println!("selftest: end-to-end recovery ok");
    println!("selftest: all suites passed (seed {})", args.seed);
    Ok(())
}

fn config_kernel() -> usize {
    RunConfig::default().kernel_size
}

fn random_field(
    rng: &mut ChaCha8Rng,
    h: usize,
    w: usize,
    classes: usize,
) -> posevote::voting::VoterField {
    use rand::Rng;
    let mut values = vec![0.0; h * w * classes];
    for cell in values.chunks_mut(classes) {
        let mut sum = 0.0;
        for v in cell.iter_mut() {
            *v = rng.gen::<f64>();
            sum += *v;
        }
        for v in cell.iter_mut() {
            *v /= sum;
        }
    }
    posevote::voting::VoterField::new(0, h, w, 4, classes, values).unwrap()
}

fn random_coarse(
    rng: &mut ChaCha8Rng,
    h: usize,
    w: usize,
    classes: usize,
) -> consensus::CoarseField {
    let field = random_field(rng, h, w, classes);
    consensus::CoarseField {
        keypoint_id: 0,
        height: h,
        width: w,
        factor: 12,
        num_classes: classes,
        values: field.values,
    }
}

fn random_tree(rng: &mut ChaCha8Rng) -> mrf::EnergyModel {
    use rand::Rng;
    let n = rng.gen_range(2..=5);
    let mut model = mrf::EnergyModel::default();
    let sizes: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=6)).collect();
    for (i, &s) in sizes.iter().enumerate() {
        let unary: Vec<f64> = (0..s).map(|_| rng.gen_range(-2.0..2.0)).collect();
        model.add_node(i, (0..s).collect(), unary).unwrap();
    }
    for i in 1..n {
        let parent = rng.gen_range(0..i);
        let costs: Vec<f64> = (0..sizes[parent] * sizes[i])
            .map(|_| rng.gen_range(-2.0..2.0))
            .collect();
        model.add_edge(parent, i, costs).unwrap();
    }
    model
}
