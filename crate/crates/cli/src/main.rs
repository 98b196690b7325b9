//! `snncost`: command-line front end for the training-cost toolkit.
//!
//! Exit codes: 0 success, 1 usage error, 2 I/O error, 3 validation error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use snncost_core::ann::{ann_counts, compare_reports_with_tables, AnnCountOptions};
use snncost_core::checkpoint::{load_weights, save_weights};
use snncost_core::config::KvConfig;
use snncost_core::counts::{
    count_ops, resolve_ann_sparsity, resolve_snn_sparsity, ArchParams, CountOptions, LayerSparsity,
    OpCounts,
};
use snncost_core::dataflow::crosscheck_network;
use snncost_core::energy::{
    layer_compute_energy, report_from_counts, spill_threshold, sweep_grad_u_scale,
    sweep_timesteps, EnergyOptions, EnergyReport, EnergyTable,
};
use snncost_core::error::Error as CoreError;
use snncost_core::lif::LifParams;
use snncost_core::mnist::load_mnist;
use snncost_core::network::{LayerSpec, NetworkSpec};
use snncost_core::parallel::{configure_threads, Parallelism};
use snncost_core::probe::{ProfileMeta, SparsityProbe, SparsityProfile};
use snncost_core::snn::{SgdState, Weights};
use snncost_core::train::{evaluate, probe_layer_names, train_epoch, TrainConfig};

#[derive(Parser)]
#[command(
    name = "snncost",
    version,
    about = "Training-cost analysis for spiking networks: train, profile sparsity, estimate energy, compare against an ANN baseline, sweep hypotheticals, crosscheck the dataflow"
)]
struct Cli {
    /// Cap the worker thread count (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a spiking network on an MNIST-layout dataset and record
    /// per-epoch sparsity profiles.
    Train(TrainArgs),
    /// Measure sparsity over a dataset without updating weights.
    Profile(ProfileArgs),
    /// Evaluate op counts and energy for a network and sparsity profile.
    Estimate(EstimateArgs),
    /// Compare SNN and ANN energy reports.
    Compare(CompareArgs),
    /// Sweep total energy across timesteps.
    SweepT(SweepTArgs),
    /// Sweep compute energy across potential-gradient sparsity scales.
    SweepDu(SweepDuArgs),
    /// Compare analytic access counts against the dataflow simulator.
    Crosscheck(CrosscheckArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Network + training config file.
    #[arg(long)]
    net: PathBuf,
    /// Dataset directory (IDX files, raw or .gz).
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    timesteps: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Train on only the first N images (smoke tests).
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Args)]
struct ProfileArgs {
    #[arg(long)]
    net: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Weight checkpoint to profile; fresh seeded weights otherwise.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    timesteps: Option<usize>,
    /// Measure over only the first N images.
    #[arg(long, default_value_t = 1000)]
    limit: usize,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    net: PathBuf,
    /// Hardware description (defaults when omitted).
    #[arg(long)]
    hw: Option<PathBuf>,
    /// Energy table (defaults to the SNN table, or the ANN table for an ANN
    /// profile).
    #[arg(long)]
    energy_table: Option<PathBuf>,
    /// Sparsity profile JSON; its `kind` selects the SNN or ANN formulas.
    #[arg(long)]
    profile: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    timesteps: Option<u32>,
    #[arg(long)]
    overhead_mode: bool,
    #[arg(long)]
    sparse_spad: bool,
    /// Ignore the profile's rates (dense evaluation).
    #[arg(long)]
    dense: bool,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    net: PathBuf,
    #[arg(long)]
    hw: Option<PathBuf>,
    #[arg(long)]
    energy_table: Option<PathBuf>,
    /// SNN sparsity profile.
    #[arg(long)]
    profile: PathBuf,
    #[arg(long)]
    ann_energy_table: Option<PathBuf>,
    #[arg(long)]
    ann_profile: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    timesteps: Option<u32>,
    #[arg(long)]
    overhead_mode: bool,
    #[arg(long)]
    sparse_spad: bool,
    /// Compare the dense (sparsity-free) configurations.
    #[arg(long)]
    dense: bool,
}

#[derive(Args)]
struct SweepTArgs {
    #[arg(long)]
    net: PathBuf,
    #[arg(long)]
    hw: Option<PathBuf>,
    #[arg(long)]
    energy_table: Option<PathBuf>,
    #[arg(long)]
    profile: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated timestep values.
    #[arg(long, default_value = "1,2,4,8,16,32,64")]
    t_list: String,
    /// Add the buffer-capacity spill model.
    #[arg(long)]
    spill_model: bool,
    #[arg(long)]
    overhead_mode: bool,
    #[arg(long)]
    sparse_spad: bool,
}

#[derive(Args)]
struct SweepDuArgs {
    #[arg(long)]
    net: PathBuf,
    #[arg(long)]
    hw: Option<PathBuf>,
    #[arg(long)]
    energy_table: Option<PathBuf>,
    #[arg(long)]
    profile: PathBuf,
    #[arg(long)]
    ann_energy_table: Option<PathBuf>,
    #[arg(long)]
    ann_profile: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated sparsity scale factors.
    #[arg(long, default_value = "0.8,0.9,1.0,1.1,1.2,1.3,1.4,1.5,1.75,2.0")]
    scale_list: String,
    #[arg(long)]
    timesteps: Option<u32>,
    #[arg(long)]
    overhead_mode: bool,
    #[arg(long)]
    sparse_spad: bool,
}

#[derive(Args)]
struct CrosscheckArgs {
    #[arg(long)]
    net: PathBuf,
    #[arg(long)]
    hw: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    timesteps: Option<u32>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version requests are not errors
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        configure_threads(n);
    }
    let result = match cli.command {
        Command::Train(args) => run_train(args),
        Command::Profile(args) => run_profile(args),
        Command::Estimate(args) => run_estimate(args),
        Command::Compare(args) => run_compare(args),
        Command::SweepT(args) => run_sweep_t(args),
        Command::SweepDu(args) => run_sweep_du(args),
        Command::Crosscheck(args) => run_crosscheck(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                CoreError::Io { .. } => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}

// --- shared plumbing -------------------------------------------------------

type Result<T> = std::result::Result<T, CoreError>;

fn ensure_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CoreError::io(dir.display().to_string(), e))
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CoreError::io(path.display().to_string(), e))
}

/// Reproducibility manifest: inputs hashed, seed and flags recorded. The
/// wall-clock timestamp goes to a separate file so artifact bytes stay
/// comparable across runs.
fn write_manifest(
    dir: &Path,
    subcommand: &str,
    inputs: &[&Path],
    notes: &[(String, String)],
) -> Result<()> {
    let mut manifest = format!(
        "tool = snncost {}\nsubcommand = {subcommand}\n",
        env!("CARGO_PKG_VERSION")
    );
    for input in inputs {
        let bytes = fs::read(input).map_err(|e| CoreError::io(input.display().to_string(), e))?;
        let digest = Sha256::digest(&bytes);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        manifest.push_str(&format!("input {} = sha256:{hex}\n", input.display()));
    }
    for (key, value) in notes {
        manifest.push_str(&format!("{key} = {value}\n"));
    }
    write_file(dir, "manifest.txt", &manifest)?;
    let now = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    write_file(dir, "run_info.txt", &format!("unix_time = {now}\n"))
}

struct NetInputs {
    net: NetworkSpec,
    kv: KvConfig,
}

fn load_net(path: &Path) -> Result<NetInputs> {
    let kv = KvConfig::load(path)?;
    let net = NetworkSpec::from_config(&kv)?;
    Ok(NetInputs { net, kv })
}

fn load_arch(path: Option<&PathBuf>, timesteps: Option<u32>) -> Result<ArchParams> {
    let mut arch = match path {
        Some(p) => ArchParams::from_config(&KvConfig::load(p)?)?,
        None => ArchParams::default(),
    };
    if let Some(t) = timesteps {
        arch.timesteps = t;
    }
    arch.validate()?;
    Ok(arch)
}

fn load_table(path: Option<&PathBuf>, ann: bool) -> Result<EnergyTable> {
    match path {
        Some(p) => EnergyTable::from_config(&KvConfig::load(p)?),
        None => Ok(if ann {
            EnergyTable::default_ann()
        } else {
            EnergyTable::default_snn()
        }),
    }
}

/// Resolves a profile against the network, honoring its `kind`.
fn resolve_profile(
    net: &NetworkSpec,
    profile: &SparsityProfile,
    dense: bool,
) -> Result<(Vec<LayerSparsity>, bool)> {
    let dims = net.conv_fc_dims();
    let is_ann = profile.kind == "ann";
    if dense {
        return Ok((vec![LayerSparsity::DENSE; dims.len()], is_ann));
    }
    let resolved = if is_ann {
        resolve_ann_sparsity(&dims, profile)?
    } else {
        resolve_snn_sparsity(&dims, profile)?
    };
    Ok((resolved, is_ann))
}

fn counts_for(
    net: &NetworkSpec,
    arch: &ArchParams,
    sparsity: &[LayerSparsity],
    is_ann: bool,
    sparse_spad: bool,
) -> Result<OpCounts> {
    let dims = net.conv_fc_dims();
    if is_ann {
        ann_counts(
            &dims,
            arch,
            sparsity,
            &AnnCountOptions {
                sparse_spad,
                mask_traffic: true,
            },
        )
    } else {
        count_ops(
            &dims,
            arch,
            sparsity,
            &CountOptions {
                sparse_spad,
                ..CountOptions::default()
            },
        )
    }
}

fn layer_energy_csv(counts: &OpCounts, table: &EnergyTable, overhead: bool) -> String {
    let mut out = String::from("layer,fwd_compute,bwd_compute,wup_compute\n");
    for (name, stages) in layer_compute_energy(counts, table, overhead) {
        out.push_str(&format!(
            "{name},{:.6},{:.6},{:.6}\n",
            stages[0], stages[1], stages[2]
        ));
    }
    out
}

// --- subcommands -----------------------------------------------------------

fn run_estimate(args: EstimateArgs) -> Result<()> {
    ensure_out_dir(&args.out)?;
    let NetInputs { net, .. } = load_net(&args.net)?;
    let arch = load_arch(args.hw.as_ref(), args.timesteps)?;
    let profile = SparsityProfile::load(&args.profile)?;
    let (sparsity, is_ann) = resolve_profile(&net, &profile, args.dense)?;
    let table = load_table(args.energy_table.as_ref(), is_ann)?;
    let arch = if is_ann { arch.with_timesteps(1) } else { arch };
    let counts = counts_for(&net, &arch, &sparsity, is_ann, args.sparse_spad)?;
    let report = report_from_counts(&counts, &table, args.overhead_mode);
    report.check_consistency()?;
    write_file(&args.out, "counts.csv", &counts.to_csv())?;
    write_file(&args.out, "energy.csv", &report.to_csv())?;
    write_file(
        &args.out,
        "layer_energy.csv",
        &layer_energy_csv(&counts, &table, args.overhead_mode),
    )?;
    write_file(&args.out, "summary.txt", &format!("{}\n", report.summary_line()))?;
    let mut inputs: Vec<&Path> = vec![args.net.as_path(), args.profile.as_path()];
    for p in [&args.hw, &args.energy_table].into_iter().flatten() {
        inputs.push(p);
    }
    write_manifest(
        &args.out,
        "estimate",
        &inputs,
        &[
            ("timesteps".into(), arch.timesteps.to_string()),
            ("overhead_mode".into(), args.overhead_mode.to_string()),
            ("sparse_spad".into(), args.sparse_spad.to_string()),
            ("dense".into(), args.dense.to_string()),
            ("profile_kind".into(), profile.kind.clone()),
        ],
    )?;
    println!("{}", report.summary_line());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn snn_ann_reports(
    net: &NetworkSpec,
    arch: &ArchParams,
    snn_profile: &SparsityProfile,
    ann_profile: &SparsityProfile,
    snn_table: &EnergyTable,
    ann_table: &EnergyTable,
    dense: bool,
    overhead: bool,
    sparse_spad: bool,
) -> Result<(EnergyReport, EnergyReport)> {
    let (snn_sparsity, snn_is_ann) = resolve_profile(net, snn_profile, dense)?;
    if snn_is_ann {
        return Err(CoreError::Validation(
            "--profile must be an SNN profile (kind = snn)".into(),
        ));
    }
    let (ann_sparsity, ann_is_ann) = resolve_profile(net, ann_profile, dense)?;
    if !ann_is_ann {
        return Err(CoreError::Validation(
            "--ann-profile must be an ANN profile (kind = ann)".into(),
        ));
    }
    let snn_counts = counts_for(net, arch, &snn_sparsity, false, sparse_spad)?;
    let ann_c = counts_for(net, arch, &ann_sparsity, true, sparse_spad)?;
    Ok((
        report_from_counts(&snn_counts, snn_table, overhead),
        report_from_counts(&ann_c, ann_table, overhead),
    ))
}

fn run_compare(args: CompareArgs) -> Result<()> {
    ensure_out_dir(&args.out)?;
    let NetInputs { net, .. } = load_net(&args.net)?;
    let arch = load_arch(args.hw.as_ref(), args.timesteps)?;
    let snn_profile = SparsityProfile::load(&args.profile)?;
    let ann_profile = SparsityProfile::load(&args.ann_profile)?;
    let snn_table = load_table(args.energy_table.as_ref(), false)?;
    let ann_table = load_table(args.ann_energy_table.as_ref(), true)?;
    let (snn, ann) = snn_ann_reports(
        &net,
        &arch,
        &snn_profile,
        &ann_profile,
        &snn_table,
        &ann_table,
        args.dense,
        args.overhead_mode,
        args.sparse_spad,
    )?;
    let ratios = compare_reports_with_tables(&snn, &snn_table, &ann, &ann_table);
    write_file(&args.out, "ratios.csv", &ratios.to_csv())?;
    write_file(&args.out, "snn_energy.csv", &snn.to_csv())?;
    write_file(&args.out, "ann_energy.csv", &ann.to_csv())?;
    let mut inputs: Vec<&Path> = vec![
        args.net.as_path(),
        args.profile.as_path(),
        args.ann_profile.as_path(),
    ];
    for p in [&args.hw, &args.energy_table, &args.ann_energy_table]
        .into_iter()
        .flatten()
    {
        inputs.push(p);
    }
    write_manifest(
        &args.out,
        "compare",
        &inputs,
        &[
            ("timesteps".into(), arch.timesteps.to_string()),
            ("dense".into(), args.dense.to_string()),
            ("overhead_mode".into(), args.overhead_mode.to_string()),
            ("sparse_spad".into(), args.sparse_spad.to_string()),
        ],
    )?;
    for (name, ratio) in ratios.named() {
        match ratio.value {
            Some(v) => println!("{name} = {v:.4}"),
            None => println!("{name} = degenerate (zero denominator)"),
        }
    }
    if ratios.unit_mismatch {
        println!("warning: energy tables price the memory hierarchy differently; ratios mix units");
    }
    Ok(())
}

fn run_sweep_t(args: SweepTArgs) -> Result<()> {
    ensure_out_dir(&args.out)?;
    let NetInputs { net, .. } = load_net(&args.net)?;
    let arch = load_arch(args.hw.as_ref(), None)?;
    let profile = SparsityProfile::load(&args.profile)?;
    let (sparsity, is_ann) = resolve_profile(&net, &profile, false)?;
    if is_ann {
        return Err(CoreError::Validation("sweep-t expects an SNN profile".into()));
    }
    let table = load_table(args.energy_table.as_ref(), false)?;
    let t_list = parse_u32_list(&args.t_list)?;
    let dims = net.conv_fc_dims();
    let opts = EnergyOptions {
        overhead_mode: args.overhead_mode,
        sparse_spad: args.sparse_spad,
    };
    let curve = sweep_timesteps(
        &dims,
        &arch,
        &sparsity,
        &table,
        &t_list,
        &opts,
        args.spill_model,
        Parallelism::Rayon,
    )?;
    let mut csv = String::from("t,energy\n");
    for (t, e) in &curve {
        csv.push_str(&format!("{t},{e:.6}\n"));
    }
    write_file(&args.out, "sweep_t.csv", &csv)?;
    let threshold = spill_threshold(&dims, &arch);
    write_file(
        &args.out,
        "summary.txt",
        &format!(
            "spill_model = {}\nspill_threshold_t = {threshold:.3}\n",
            args.spill_model
        ),
    )?;
    let mut inputs: Vec<&Path> = vec![args.net.as_path(), args.profile.as_path()];
    for p in [&args.hw, &args.energy_table].into_iter().flatten() {
        inputs.push(p);
    }
    write_manifest(
        &args.out,
        "sweep-t",
        &inputs,
        &[
            ("t_list".into(), args.t_list.clone()),
            ("spill_model".into(), args.spill_model.to_string()),
        ],
    )?;
    println!(
        "swept {} timestep values (spill model {}); capacity threshold at T = {threshold:.2}",
        curve.len(),
        if args.spill_model { "on" } else { "off" }
    );
    Ok(())
}

fn run_sweep_du(args: SweepDuArgs) -> Result<()> {
    ensure_out_dir(&args.out)?;
    let NetInputs { net, .. } = load_net(&args.net)?;
    let arch = load_arch(args.hw.as_ref(), args.timesteps)?;
    let snn_profile = SparsityProfile::load(&args.profile)?;
    let ann_profile = SparsityProfile::load(&args.ann_profile)?;
    let snn_table = load_table(args.energy_table.as_ref(), false)?;
    let ann_table = load_table(args.ann_energy_table.as_ref(), true)?;
    let (_, ann_report) = snn_ann_reports(
        &net,
        &arch,
        &snn_profile,
        &ann_profile,
        &snn_table,
        &ann_table,
        false,
        args.overhead_mode,
        args.sparse_spad,
    )?;
    let (snn_sparsity, _) = resolve_profile(&net, &snn_profile, false)?;
    let scales = parse_f64_list(&args.scale_list)?;
    let dims = net.conv_fc_dims();
    let opts = EnergyOptions {
        overhead_mode: args.overhead_mode,
        sparse_spad: args.sparse_spad,
    };
    let (points, breakeven) = sweep_grad_u_scale(
        &dims,
        &arch,
        &snn_sparsity,
        &snn_table,
        ann_report.compute_total(),
        &scales,
        &opts,
        Parallelism::Rayon,
    )?;
    let mut snn_csv = String::from("scale,energy\n");
    let mut ann_csv = String::from("scale,energy\n");
    for p in &points {
        snn_csv.push_str(&format!("{:.4},{:.6}\n", p.scale, p.snn_compute));
        ann_csv.push_str(&format!("{:.4},{:.6}\n", p.scale, p.ann_compute));
    }
    write_file(&args.out, "sweep_du_snn.csv", &snn_csv)?;
    write_file(&args.out, "sweep_du_ann.csv", &ann_csv)?;
    let breakeven_text = match breakeven {
        Some(s) => format!("breakeven_scale = {s:.4}\n"),
        None => "breakeven_scale = none\n".to_string(),
    };
    write_file(&args.out, "summary.txt", &breakeven_text)?;
    let mut inputs: Vec<&Path> = vec![
        args.net.as_path(),
        args.profile.as_path(),
        args.ann_profile.as_path(),
    ];
    for p in [&args.hw, &args.energy_table, &args.ann_energy_table]
        .into_iter()
        .flatten()
    {
        inputs.push(p);
    }
    write_manifest(
        &args.out,
        "sweep-du",
        &inputs,
        &[("scale_list".into(), args.scale_list.clone())],
    )?;
    match breakeven {
        Some(s) => println!("break-even sparsity scale: {s:.4}"),
        None => println!("curves do not cross over the swept range"),
    }
    Ok(())
}

fn run_crosscheck(args: CrosscheckArgs) -> Result<()> {
    ensure_out_dir(&args.out)?;
    let NetInputs { net, .. } = load_net(&args.net)?;
    let arch = load_arch(args.hw.as_ref(), args.timesteps)?;
    let dims = net.conv_fc_dims();
    let strides_pads: Vec<(usize, usize)> = net
        .layers
        .iter()
        .filter_map(|l| match l {
            LayerSpec::Conv { stride, pad, .. } => Some((*stride, *pad)),
            LayerSpec::Fc { .. } => Some((1, 0)),
            LayerSpec::Pool { .. } => None,
        })
        .collect();
    let counts = count_ops(
        &dims,
        &arch,
        &vec![LayerSparsity::DENSE; dims.len()],
        &CountOptions::default(),
    )?;
    let report = crosscheck_network(&dims, &strides_pads, &arch, &counts)?;
    write_file(&args.out, "crosscheck.csv", &report.to_csv())?;
    write_manifest(
        &args.out,
        "crosscheck",
        &[args.net.as_path()],
        &[("timesteps".into(), arch.timesteps.to_string())],
    )?;
    let mut exact = 0;
    let mut flagged = 0;
    for row in &report.rows {
        if row.assumption {
            flagged += 1;
        } else if row.delta == 0.0 {
            exact += 1;
        } else {
            println!(
                "MISMATCH {} {} {}: analytic {} simulated {}",
                row.layer,
                row.stage.name(),
                row.field,
                row.analytic,
                row.simulated
            );
        }
    }
    println!(
        "crosscheck: {exact} derivable fields match exactly, {flagged} assumption-flagged fields reported"
    );
    Ok(())
}

fn run_train(args: TrainArgs) -> Result<()> {
    ensure_out_dir(&args.out)?;
    let NetInputs { net, kv } = load_net(&args.net)?;
    let lif = LifParams::from_config(&kv)?;
    let mut tc = TrainConfig::from_config(&kv)?;
    if let Some(seed) = args.seed {
        tc.seed = seed;
    }
    if let Some(t) = args.timesteps {
        tc.timesteps = t;
    }
    if let Some(e) = args.epochs {
        tc.epochs = e;
    }
    tc.validate()?;
    let (mut train_set, test_set) = load_mnist(&args.data)?;
    if let Some(limit) = args.limit {
        train_set.truncate(limit);
    }
    let mut weights = Weights::init(&net, tc.seed);
    let mut state = SgdState::new(net.layers.len());
    let mut metrics_csv = String::from("epoch,mean_loss,train_accuracy,test_accuracy\n");
    for epoch in 0..tc.epochs {
        let mut probe = SparsityProbe::new(probe_layer_names(&net), lif);
        let metrics = train_epoch(
            &net,
            &mut weights,
            &mut state,
            &train_set,
            &tc,
            &lif,
            &mut probe,
            epoch,
            Parallelism::Rayon,
        )?;
        let test_acc = evaluate(
            &net,
            &weights,
            &test_set,
            tc.timesteps,
            tc.seed,
            &lif,
            Parallelism::Rayon,
        )?;
        let profile = probe.finalize_profile(ProfileMeta {
            network: net.name.clone(),
            dataset: "mnist".into(),
            timesteps: tc.timesteps as u32,
            epoch: epoch as u32,
            kind: "snn".into(),
        })?;
        profile.store(args.out.join(format!("profile_epoch_{epoch}.json")))?;
        metrics_csv.push_str(&format!(
            "{},{:.6},{:.6},{:.6}\n",
            epoch, metrics.mean_loss, metrics.accuracy, test_acc
        ));
        println!(
            "epoch {}: loss {:.4}, train acc {:.4}, test acc {:.4}",
            epoch, metrics.mean_loss, metrics.accuracy, test_acc
        );
    }
    write_file(&args.out, "metrics.csv", &metrics_csv)?;
    save_weights(&weights, args.out.join("weights.bin"))?;
    write_manifest(
        &args.out,
        "train",
        &[args.net.as_path()],
        &[
            ("seed".into(), tc.seed.to_string()),
            ("timesteps".into(), tc.timesteps.to_string()),
            ("epochs".into(), tc.epochs.to_string()),
            ("data".into(), args.data.display().to_string()),
            ("train_images".into(), train_set.len().to_string()),
        ],
    )?;
    Ok(())
}

fn run_profile(args: ProfileArgs) -> Result<()> {
    ensure_out_dir(&args.out)?;
    let NetInputs { net, kv } = load_net(&args.net)?;
    let lif = LifParams::from_config(&kv)?;
    let mut tc = TrainConfig::from_config(&kv)?;
    if let Some(seed) = args.seed {
        tc.seed = seed;
    }
    if let Some(t) = args.timesteps {
        tc.timesteps = t;
    }
    // measurement pass only
    tc.lr = 0.0;
    tc.epochs = 1;
    let (mut train_set, _) = load_mnist(&args.data)?;
    train_set.truncate(args.limit);
    let mut weights = match &args.checkpoint {
        Some(path) => load_weights(path)?,
        None => Weights::init(&net, tc.seed),
    };
    let mut state = SgdState::new(net.layers.len());
    let mut probe = SparsityProbe::new(probe_layer_names(&net), lif);
    train_epoch(
        &net,
        &mut weights,
        &mut state,
        &train_set,
        &tc,
        &lif,
        &mut probe,
        0,
        Parallelism::Rayon,
    )?;
    let profile = probe.finalize_profile(ProfileMeta {
        network: net.name.clone(),
        dataset: "mnist".into(),
        timesteps: tc.timesteps as u32,
        epoch: 0,
        kind: "snn".into(),
    })?;
    profile.store(args.out.join("profile.json"))?;
    let mut inputs: Vec<&Path> = vec![args.net.as_path()];
    if let Some(p) = &args.checkpoint {
        inputs.push(p);
    }
    write_manifest(
        &args.out,
        "profile",
        &inputs,
        &[
            ("seed".into(), tc.seed.to_string()),
            ("timesteps".into(), tc.timesteps.to_string()),
            ("images".into(), train_set.len().to_string()),
        ],
    )?;
    println!("profiled {} images", train_set.len());
    Ok(())
}

fn parse_u32_list(text: &str) -> Result<Vec<u32>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<u32>()
                .map_err(|_| CoreError::Validation(format!("bad timestep value `{s}`")))
        })
        .collect()
}

fn parse_f64_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CoreError::Validation(format!("bad scale value `{s}`")))
        })
        .collect()
}
