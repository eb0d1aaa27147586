use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use atomchip::chip_model::{
    builtin_paper_layout, load_layout, load_layout_file, splitting_currents, AtomSpecies, ChipLayout, CurrentConfig, Discretization,
    Vec3,
};
use atomchip::constants::{GAUSS, KHZ, MICRON, MS, PLANCK};
use atomchip::disorder::{
    invert_density_boltzmann, invert_density_thomas_fermi, inversion_csv, rb87_interaction_constant,
    remove_harmonic_background, roughness_csv, wire_roughness, CenterlineDeviation, DensityProfile, RandomDeviation,
    RoughnessRun,
};
use atomchip::interferometry::{
    fit_modulated_gaussian, histogram_csv, phase_statistics, profile_csv, read_phases_csv, read_profile_csv,
    synthesize_fringes, uniform_grid, wrapped_normal, Envelope, FringeFitRecord, FringeModel, PhaseStatsRecord,
    DEFAULT_BIN_DEG,
};
use atomchip::magnetostatics::{field_map, write_field_map_csv, FieldSolver, Grid};
use atomchip::report::{emit_report, fmt_sig, round_sig, Artifact, RunManifest};
use atomchip::reproduce::{reproduce_paper, summary_csv, summary_table};
use atomchip::rf::{
    critical_amplitude, find_operating_point, split_scan, split_scan_csv, RfDriveState, Slice, SliceFields,
    SplitSearchBox, SplitTarget,
};
use atomchip::thermal::{
    calibrate, max_current_density, thermal_record, Materials, ThermalWire, DEFAULT_HEATED_LENGTH, DEFAULT_LIMIT,
};
use atomchip::trap::{characterize_trap, DepthOptions, MinimizeOptions, PotentialDef, TrapRecord};

/// Atom-chip trap, rf splitting, roughness, thermal and fringe-phase toolkit.
#[derive(Parser)]
#[command(name = "atomchip", version, about)]
struct Cli {
    /// Layout/current configuration (JSON). The `.json` suffix may be omitted.
    /// Without it the builtin six-wire chip is used.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Directory for output files (created if missing). Without it results go
    /// to stdout only.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Random seed; required by stochastic subcommands.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Overwrite existing output files.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Field on a regular grid, CSV in μm and G.
    FieldMap(FieldMapArgs),
    /// Locate and characterize the magnetic trap near a seed point.
    Trap(TrapArgs),
    /// Double-well analysis over an rf amplitude ramp.
    SplitScan(SplitScanArgs),
    /// Axial field roughness from a meandering wire centerline.
    Roughness(RoughnessArgs),
    /// Potential from a measured linear density profile.
    InvertDensity(InvertArgs),
    /// Steady temperature rise and maximum current density of a wire.
    Thermal(ThermalArgs),
    /// Fit a modulated gaussian to a fringe profile.
    FringeFit(FringeArgs),
    /// Circular statistics and histogram of a set of phases.
    PhaseStats(PhaseArgs),
    /// Recompute the published figures and compare them with tolerances.
    ReproducePaper,
}

#[derive(Args)]
struct DiscArg {
    /// Filaments across width × thickness, e.g. 8x3 or 1x1.
    #[arg(long, default_value = "8x3", value_parser = parse_disc)]
    discretization: Discretization,
}

#[derive(Args)]
struct FieldMapArgs {
    /// Grid corner in μm, `x,y,z`.
    #[arg(long, value_parser = parse_vec_um, allow_hyphen_values = true)]
    min: Vec3,
    /// Opposite grid corner in μm.
    #[arg(long, value_parser = parse_vec_um, allow_hyphen_values = true)]
    max: Vec3,
    /// Points per axis, `nx,ny,nz`.
    #[arg(long, value_parser = parse_counts)]
    counts: [usize; 3],
    #[command(flatten)]
    disc: DiscArg,
}

#[derive(Args)]
struct TrapArgs {
    /// Start of the minimum search, μm, e.g. `0,150,0um`.
    #[arg(long, value_parser = parse_vec_um, allow_hyphen_values = true)]
    seed_point: Vec3,
    /// Include gravity along the species' gravity vector.
    #[arg(long)]
    gravity: bool,
    #[command(flatten)]
    disc: DiscArg,
}

#[derive(Args)]
struct SplitScanArgs {
    /// Amplitude ramp per rf channel, `start:stop:count` in A.
    #[arg(long, value_parser = parse_range)]
    amplitudes: (f64, f64, usize),
    /// rf frequency in kHz; defaults to the configuration's.
    #[arg(long, conflicts_with = "detuning_khz")]
    rf_frequency_khz: Option<f64>,
    /// rf frequency as an offset above the Larmor frequency at the static
    /// trap bottom, kHz.
    #[arg(long, allow_hyphen_values = true)]
    detuning_khz: Option<f64>,
    /// Seed of the static minimum search, μm.
    #[arg(long, value_parser = parse_vec_um, allow_hyphen_values = true)]
    seed_point: Option<Vec3>,
    /// Half-length of the slice along x, μm.
    #[arg(long, default_value_t = 10.0)]
    half_length_um: f64,
    #[arg(long, default_value_t = 1001)]
    samples: usize,
    /// Also search the default detuning/amplitude box for a 4 μm, 5–20 kHz
    /// double well.
    #[arg(long)]
    find_operating_point: bool,
    #[command(flatten)]
    disc: DiscArg,
}

#[derive(Args)]
struct RoughnessArgs {
    /// Wire to perturb; defaults to the one carrying the largest dc current.
    #[arg(long)]
    wire: Option<String>,
    /// `triangle:AMP_nm:RAMP_um`, `sinusoid:AMP_nm:PERIOD_um` or
    /// `random:RMS_nm:CORRELATION_um` (needs --seed).
    #[arg(long, default_value = "triangle:20:200")]
    deviation: String,
    /// Height of the evaluation line above the chip, μm.
    #[arg(long, default_value_t = 150.0)]
    height_um: f64,
    /// Axial samples, `start:stop:count` in μm.
    #[arg(long, default_value = "-1500:1500:301", value_parser = parse_range, allow_hyphen_values = true)]
    z_um: (f64, f64, usize),
    /// Resampling step of the perturbed wire, μm.
    #[arg(long, default_value_t = 5.0)]
    step_um: f64,
    #[command(flatten)]
    disc: DiscArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Boltzmann,
    ThomasFermi,
}

#[derive(Args)]
struct InvertArgs {
    /// Density CSV with header `z_um,n_per_um`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "boltzmann")]
    method: Method,
    /// Cloud temperature for the Boltzmann inversion, μK.
    #[arg(long, default_value_t = 1.9)]
    temperature_uk: f64,
    /// Chemical potential for the Thomas–Fermi inversion, kHz.
    #[arg(long, default_value_t = 3.0)]
    mu_khz: f64,
    /// Transverse trap frequency for the Thomas–Fermi inversion, Hz.
    #[arg(long, default_value_t = 2000.0)]
    omega_perp_hz: f64,
    /// Fit and subtract a harmonic background, reporting ω_z.
    #[arg(long)]
    harmonic: bool,
}

#[derive(Args)]
struct ThermalArgs {
    /// Wire whose cross-section is used; defaults to the widest one.
    #[arg(long)]
    wire: Option<String>,
    /// Current, A.
    #[arg(long)]
    current: f64,
    /// Temperature limit for J_max, K.
    #[arg(long, default_value_t = DEFAULT_LIMIT)]
    limit_k: f64,
    /// Calibration wire width, μm (3 μm thick).
    #[arg(long, default_value_t = 50.0)]
    calibrate_width_um: f64,
    /// Calibration current density, A/m² (reaches the limit).
    #[arg(long, default_value_t = 8.8e9)]
    calibrate_j: f64,
}

#[derive(Args)]
struct FringeArgs {
    /// Profile CSV `x_um,n_arb`. Without it a profile is synthesized.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Synthesis: well separation, μm.
    #[arg(long, default_value_t = 4.0)]
    separation_um: f64,
    /// Synthesis: time of flight, ms.
    #[arg(long, default_value_t = 14.0)]
    tof_ms: f64,
    /// Synthesis: phase, degrees.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    phase_deg: f64,
    /// Synthesis: contrast.
    #[arg(long, default_value_t = 0.6)]
    contrast: f64,
    /// Synthesis: envelope rms width, μm.
    #[arg(long, default_value_t = 40.0)]
    width_um: f64,
    /// Synthesis: relative multiplicative noise (needs --seed when > 0).
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Synthesis: sample spacing, μm.
    #[arg(long, default_value_t = 2.0)]
    spacing_um: f64,
}

#[derive(Args)]
struct PhaseArgs {
    /// Phase CSV with header `phase_deg`.
    #[arg(long, conflicts_with = "simulate")]
    input: Option<PathBuf>,
    /// Draw this many phases from a wrapped normal instead (needs --seed).
    #[arg(long)]
    simulate: Option<usize>,
    /// Standard deviation of the simulated phases, degrees.
    #[arg(long, default_value_t = 23.0)]
    jitter_deg: f64,
    /// Histogram bin width, degrees.
    #[arg(long, default_value_t = DEFAULT_BIN_DEG)]
    bin_deg: f64,
}

fn parse_vec_um(s: &str) -> Result<Vec3, String> {
    let t = s.trim().trim_end_matches("um").trim_end_matches("μm");
    let v: Vec<f64> = t
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("`{p}` is not a number")))
        .collect::<Result<_, _>>()?;
    if v.len() != 3 {
        return Err(format!("expected x,y,z in μm, got `{s}`"));
    }
    Ok(Vec3::new(v[0], v[1], v[2]) * MICRON)
}

fn parse_counts(s: &str) -> Result<[usize; 3], String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|_| format!("`{p}` is not a count")))
        .collect::<Result<_, _>>()?;
    match v.as_slice() {
        [a, b, c] if *a > 0 && *b > 0 && *c > 0 => Ok([*a, *b, *c]),
        _ => Err(format!("expected three positive counts, got `{s}`")),
    }
}

fn parse_range(s: &str) -> Result<(f64, f64, usize), String> {
    let p: Vec<&str> = s.split(':').collect();
    if p.len() != 3 {
        return Err(format!("expected start:stop:count, got `{s}`"));
    }
    let a = p[0].parse::<f64>().map_err(|_| format!("bad start `{}`", p[0]))?;
    let b = p[1].parse::<f64>().map_err(|_| format!("bad stop `{}`", p[1]))?;
    let n = p[2].parse::<usize>().map_err(|_| format!("bad count `{}`", p[2]))?;
    if n == 0 {
        return Err("count must be positive".into());
    }
    Ok((a, b, n))
}

fn parse_disc(s: &str) -> Result<Discretization, String> {
    let (w, t) = s.split_once('x').ok_or_else(|| format!("expected WxT, got `{s}`"))?;
    let w = w.parse::<usize>().map_err(|_| format!("bad width count `{w}`"))?;
    let t = t.parse::<usize>().map_err(|_| format!("bad thickness count `{t}`"))?;
    if w == 0 || t == 0 {
        return Err("filament counts must be positive".into());
    }
    Ok(Discretization::new(w, t))
}

fn linspace((a, b, n): (f64, f64, usize)) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

enum Failure {
    Usage(String),
    Domain(&'static str, atomchip::Error),
}

type CliResult<T = ()> = Result<T, Failure>;

fn domain(ctx: &'static str) -> impl Fn(atomchip::Error) -> Failure {
    move |e| Failure::Domain(ctx, e)
}

struct Ctx {
    config: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    force: bool,
}

impl Ctx {
    fn load(&self) -> CliResult<(ChipLayout, CurrentConfig, AtomSpecies, Option<PathBuf>)> {
        let Some(p) = &self.config else {
            let (l, c, a) = builtin_paper_layout();
            return Ok((l, c, a, None));
        };
        let mut with_ext = p.clone().into_os_string();
        with_ext.push(".json");
        let with_ext = PathBuf::from(with_ext);
        for candidate in [p, &with_ext] {
            if candidate.is_file() {
                let (l, c, a) = load_layout_file(candidate).map_err(domain("config"))?;
                return Ok((l, c, a, Some(candidate.clone())));
            }
        }
        // Shipped configs are also available by name from any directory.
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("");
        if let Some((_, text)) = PRESETS.iter().find(|(name, _)| *name == stem) {
            let (l, c, a) = load_layout(text).map_err(domain("config"))?;
            return Ok((l, c, a, Some(p.clone())));
        }
        Err(Failure::Usage(format!(
            "config `{}` not found (presets: {})",
            p.display(),
            PRESETS.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
        )))
    }

    fn require_seed(&self, what: &str) -> CliResult<u64> {
        self.seed
            .ok_or_else(|| Failure::Usage(format!("{what} is stochastic: pass --seed")))
    }

    fn manifest(&self, command: &str, config: &Option<PathBuf>) -> RunManifest {
        let mut m = RunManifest::new(command);
        m.config = config.as_ref().map(|p| p.display().to_string());
        m.seed = self.seed;
        m
    }

    /// Prints the primary artifact and writes all artifacts when --out is set.
    fn finish(&self, manifest: RunManifest, artifacts: Vec<Artifact>) -> CliResult {
        if let Some(first) = artifacts.first() {
            match first {
                Artifact::Csv { body, .. } => print!("{body}"),
                Artifact::Json { value, .. } => {
                    println!("{}", serde_json::to_string_pretty(value).expect("json serializes"))
                }
            }
        }
        if let Some(dir) = &self.out {
            let written = emit_report(dir, &manifest, &artifacts, self.force).map_err(domain("output"))?;
            for p in written {
                eprintln!("wrote {}", p.display());
            }
        }
        Ok(())
    }
}

const PRESETS: [(&str, &str); 2] = [
    ("paper_chip", include_str!("../examples/paper_chip.json")),
    ("paper_split", include_str!("../examples/paper_split.json")),
];

fn json(name: &str, value: impl serde::Serialize) -> Artifact {
    Artifact::Json {
        name: name.into(),
        value: serde_json::to_value(value).expect("record serializes"),
    }
}

fn run_field_map(ctx: &Ctx, a: &FieldMapArgs) -> CliResult {
    let (layout, cur, _, cfg) = ctx.load()?;
    let solver = FieldSolver::new(&layout, a.disc.discretization);
    let grid = Grid::spanning(a.min, a.max, a.counts);
    let samples = field_map(&solver, &cur, &grid, None).map_err(domain("field-map"))?;
    let mut body = Vec::new();
    write_field_map_csv(&mut body, &samples).expect("writing to memory");
    let m = ctx
        .manifest("field-map", &cfg)
        .override_param("counts", format!("{:?}", a.counts));
    ctx.finish(
        m,
        vec![Artifact::Csv {
            name: "field_map.csv".into(),
            body: String::from_utf8(body).expect("utf8"),
        }],
    )
}

fn run_trap(ctx: &Ctx, a: &TrapArgs) -> CliResult {
    let (layout, cur, sp, cfg) = ctx.load()?;
    let solver = FieldSolver::new(&layout, a.disc.discretization);
    let pot = PotentialDef::new(&solver, &cur, &sp).with_gravity(a.gravity);
    let t = characterize_trap(&pot, &a.seed_point, &MinimizeOptions::default(), &DepthOptions::default())
        .map_err(domain("trap"))?;
    let m = ctx
        .manifest("trap", &cfg)
        .override_param("seed_point_um", fmt_point(&a.seed_point))
        .override_param("gravity", a.gravity);
    ctx.finish(m, vec![json("trap.json", TrapRecord::from(&t))])
}

fn fmt_point(p: &Vec3) -> String {
    format!("{},{},{}", p.x / MICRON, p.y / MICRON, p.z / MICRON)
}

fn run_split_scan(ctx: &Ctx, a: &SplitScanArgs) -> CliResult {
    let (layout, mut cur, sp, cfg) = ctx.load()?;
    if cfg.is_none() {
        cur = splitting_currents(0.0, 0.0);
        for ch in cur.rf.values_mut() {
            ch.amplitude = 1.0;
        }
    }
    if cur.rf.is_empty() {
        return Err(Failure::Usage("configuration has no rf channels".into()));
    }
    let solver = FieldSolver::new(&layout, a.disc.discretization);
    let static_cur = CurrentConfig {
        rf: Default::default(),
        ..cur.clone()
    };
    let pot = PotentialDef::new(&solver, &static_cur, &sp);
    let seed = a
        .seed_point
        .unwrap_or_else(|| Vec3::new(0.0, 300.0 * MICRON, 0.0));
    let min = atomchip::trap::find_trap_minimum(&pot, &seed, &MinimizeOptions::default()).map_err(domain("split-scan"))?;
    let slice = Slice {
        center: min.position,
        axis: Vec3::x(),
        half_length: a.half_length_um * MICRON,
        samples: a.samples,
    };
    let bottom = min.bottom_field.unwrap_or(0.0);
    let larmor = sp.g_f_mu_b().abs() * bottom / PLANCK;
    cur.rf_frequency = match (a.rf_frequency_khz, a.detuning_khz) {
        (Some(f), _) => f * KHZ,
        (None, Some(d)) => larmor + d * KHZ,
        (None, None) if cur.rf_frequency > 0.0 => cur.rf_frequency,
        (None, None) => return Err(Failure::Usage("give --rf-frequency-khz or --detuning-khz".into())),
    };
    let amps = linspace(a.amplitudes);
    let rows = split_scan(&solver, &cur, &sp, slice, &amps).map_err(domain("split-scan"))?;
    let mut summary = serde_json::json!({
        "trap_center_um": [round_sig(min.position.x / MICRON), round_sig(min.position.y / MICRON), round_sig(min.position.z / MICRON)],
        "bottom_field_G": round_sig(bottom / GAUSS),
        "bottom_larmor_kHz": round_sig(larmor / KHZ),
        "rf_frequency_kHz": round_sig(cur.rf_frequency / KHZ),
        "critical_amplitude_A": critical_amplitude(&rows).map(round_sig),
    });
    if a.find_operating_point {
        let fields = SliceFields::new(&solver, &static_cur, slice).map_err(domain("split-scan"))?;
        let drive = RfDriveState::from_currents(&cur).map_err(domain("split-scan"))?;
        let op = find_operating_point(&solver, &fields, &drive, &sp, &SplitSearchBox::default(), &SplitTarget::default());
        summary["operating_point"] = match op {
            Some(op) => serde_json::json!({
                "rf_frequency_kHz": round_sig(op.rf_frequency / KHZ),
                "detuning_kHz": round_sig(op.detuning / KHZ),
                "amplitude_A": round_sig(op.amplitude),
                "separation_um": round_sig(op.report.separation / MICRON),
                "barrier_kHz": round_sig(op.report.barrier_hz() / KHZ),
                "asymmetry_kHz": round_sig(op.report.asymmetry_hz() / KHZ),
            }),
            None => serde_json::Value::Null,
        };
    }
    eprintln!("{}", serde_json::to_string_pretty(&summary).expect("json"));
    let m = ctx
        .manifest("split-scan", &cfg)
        .override_param("rf_frequency_kHz", cur.rf_frequency / KHZ)
        .override_param("amplitudes_A", format!("{}:{}:{}", a.amplitudes.0, a.amplitudes.1, a.amplitudes.2));
    ctx.finish(
        m,
        vec![
            Artifact::Csv {
                name: "split_scan.csv".into(),
                body: split_scan_csv(&rows),
            },
            json("split_summary.json", summary),
        ],
    )
}

fn parse_deviation(s: &str, seed: Option<u64>, z_span: (f64, f64)) -> CliResult<CenterlineDeviation> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |i: usize| -> CliResult<f64> {
        parts
            .get(i)
            .and_then(|p| p.parse::<f64>().ok())
            .ok_or_else(|| Failure::Usage(format!("bad deviation `{s}`")))
    };
    match parts.first().copied() {
        Some("triangle") if parts.len() == 3 => Ok(CenterlineDeviation::Triangle {
            amplitude: num(1)? * 1e-9,
            ramp: num(2)? * MICRON,
        }),
        Some("sinusoid") if parts.len() == 3 => Ok(CenterlineDeviation::Sinusoid {
            amplitude: num(1)? * 1e-9,
            period: num(2)? * MICRON,
            phase: 0.0,
        }),
        Some("random") if parts.len() == 3 => {
            let seed = seed.ok_or_else(|| Failure::Usage("random deviation is stochastic: pass --seed".into()))?;
            RandomDeviation::generate(num(1)? * 1e-9, num(2)? * MICRON, z_span.0, z_span.1, seed)
                .map(CenterlineDeviation::Random)
                .map_err(domain("roughness"))
        }
        _ => Err(Failure::Usage(format!(
            "deviation must be triangle:AMP_nm:RAMP_um, sinusoid:AMP_nm:PERIOD_um or random:RMS_nm:CORR_um, got `{s}`"
        ))),
    }
}

fn pick_wire(layout: &ChipLayout, cur: &CurrentConfig, name: &Option<String>) -> CliResult<String> {
    if let Some(n) = name {
        return layout
            .wire(n)
            .map(|w| w.name.clone())
            .ok_or_else(|| Failure::Usage(format!("no wire named `{n}`")));
    }
    layout
        .wires
        .iter()
        .max_by(|a, b| cur.dc_current(&a.channel).abs().total_cmp(&cur.dc_current(&b.channel).abs()))
        .map(|w| w.name.clone())
        .ok_or_else(|| Failure::Usage("layout has no wires".into()))
}

fn run_roughness(ctx: &Ctx, a: &RoughnessArgs) -> CliResult {
    let (layout, cur, sp, cfg) = ctx.load()?;
    let wire = pick_wire(&layout, &cur, &a.wire)?;
    let w = layout.wire(&wire).expect("picked from layout");
    let (zmin, zmax) = w
        .nodes
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.z), hi.max(p.z)));
    let dev = parse_deviation(&a.deviation, ctx.seed, (zmin, zmax))?;
    let z: Vec<f64> = linspace(a.z_um).into_iter().map(|v| v * MICRON).collect();
    let run = RoughnessRun {
        wire: wire.clone(),
        deviation: dev,
        resample_step: a.step_um * MICRON,
        height: a.height_um * MICRON,
        z,
        discretization: a.disc.discretization,
    };
    let p = wire_roughness(&layout, &cur, &sp, &run).map_err(domain("roughness"))?;
    eprintln!("max |dBz/B_main| = {}", fmt_sig(p.max_abs_ratio()));
    let m = ctx
        .manifest("roughness", &cfg)
        .override_param("wire", &wire)
        .override_param("deviation", &a.deviation)
        .override_param("height_um", a.height_um);
    ctx.finish(
        m,
        vec![Artifact::Csv {
            name: "roughness.csv".into(),
            body: roughness_csv(&p),
        }],
    )
}

fn run_invert(ctx: &Ctx, a: &InvertArgs) -> CliResult {
    let (_, _, sp, cfg) = ctx.load()?;
    let prof = DensityProfile::read_csv_file(&a.input).map_err(domain("invert-density"))?;
    let inv = match a.method {
        Method::Boltzmann => invert_density_boltzmann(&prof, a.temperature_uk * 1e-6, &sp).map_err(domain("invert-density"))?,
        Method::ThomasFermi => {
            let tf = invert_density_thomas_fermi(
                &prof,
                PLANCK * a.mu_khz * KHZ,
                2.0 * std::f64::consts::PI * a.omega_perp_hz,
                rb87_interaction_constant(),
                &sp,
            )
            .map_err(domain("invert-density"))?;
            let idx: Vec<usize> = (0..tf.z.len()).filter(|&i| tf.supported[i]).collect();
            let vmin = idx.iter().map(|&i| tf.v[i]).fold(f64::INFINITY, f64::min);
            let dv: Vec<f64> = idx.iter().map(|&i| tf.v[i] - vmin).collect();
            atomchip::disorder::InvertedPotential {
                z: idx.iter().map(|&i| tf.z[i]).collect(),
                delta_bz: dv.iter().map(|v| v / sp.zeeman_slope).collect(),
                delta_v: dv,
                indices: idx,
            }
        }
    };
    let mut artifacts = vec![Artifact::Csv {
        name: "inverted.csv".into(),
        body: inversion_csv(&inv),
    }];
    if a.harmonic {
        let fit = remove_harmonic_background(&inv.z, &inv.delta_v, sp.mass).map_err(domain("invert-density"))?;
        let residual = atomchip::disorder::InvertedPotential {
            z: inv.z.clone(),
            delta_bz: fit.residual.iter().map(|v| v / sp.zeeman_slope).collect(),
            delta_v: fit.residual.clone(),
            indices: inv.indices.clone(),
        };
        artifacts.push(Artifact::Csv {
            name: "residual.csv".into(),
            body: inversion_csv(&residual),
        });
        artifacts.push(json(
            "harmonic_fit.json",
            serde_json::json!({
                "omega_z_over_2pi_Hz": round_sig(fit.omega_z / (2.0 * std::f64::consts::PI)),
                "center_um": round_sig(fit.center / MICRON),
                "degenerate": fit.degenerate,
            }),
        ));
    }
    let m = ctx
        .manifest("invert-density", &cfg)
        .override_param("input", a.input.display())
        .override_param(
            "method",
            match a.method {
                Method::Boltzmann => "boltzmann",
                Method::ThomasFermi => "thomas-fermi",
            },
        );
    ctx.finish(m, artifacts)
}

fn run_thermal(ctx: &Ctx, a: &ThermalArgs) -> CliResult {
    let (layout, _, _, cfg) = ctx.load()?;
    let w = match &a.wire {
        Some(n) => layout
            .wire(n)
            .ok_or_else(|| Failure::Usage(format!("no wire named `{n}`")))?,
        None => layout
            .wires
            .iter()
            .max_by(|x, y| x.width.total_cmp(&y.width))
            .ok_or_else(|| Failure::Usage("layout has no wires".into()))?,
    };
    let tw = ThermalWire::from_path(w);
    let cal = ThermalWire::new(a.calibrate_width_um * MICRON, tw.thickness).map_err(domain("thermal"))?;
    let net = calibrate(Materials::default(), &cal, a.calibrate_j, a.limit_k, DEFAULT_HEATED_LENGTH).map_err(domain("thermal"))?;
    let rec = thermal_record(&w.name, &tw, &net, a.current);
    let jmax = max_current_density(&tw, &net, a.limit_k).map_err(domain("thermal"))?;
    let mut value = serde_json::to_value(&rec).expect("record serializes");
    value["J_max_A_per_m2"] = serde_json::json!(round_sig(jmax.current_density));
    value["J_max_runaway_limited"] = serde_json::json!(jmax.runaway_limited);
    let m = ctx
        .manifest("thermal", &cfg)
        .override_param("wire", &w.name)
        .override_param("current_A", a.current);
    ctx.finish(m, vec![Artifact::Json { name: "thermal.json".into(), value }])
}

fn read_file<T>(path: &Path, f: impl FnOnce(std::io::BufReader<std::fs::File>) -> atomchip::Result<T>, ctx: &'static str) -> CliResult<T> {
    let file = std::fs::File::open(path).map_err(|source| {
        Failure::Domain(
            ctx,
            atomchip::Error::Io {
                path: path.display().to_string(),
                source,
            },
        )
    })?;
    f(std::io::BufReader::new(file)).map_err(domain(ctx))
}

fn run_fringe(ctx: &Ctx, a: &FringeArgs) -> CliResult {
    let (_, _, sp, cfg) = ctx.load()?;
    let mut artifacts = Vec::new();
    let (x, n) = match &a.input {
        Some(p) => read_file(p, read_profile_csv, "fringe-fit")?,
        None => {
            let seed = if a.noise > 0.0 { ctx.require_seed("noisy synthesis")? } else { ctx.seed.unwrap_or(0) };
            let model = FringeModel::from_physical(
                a.separation_um * MICRON,
                a.tof_ms * MS,
                sp.mass,
                Envelope {
                    amplitude: 1.0,
                    center: 0.0,
                    width: a.width_um * MICRON,
                },
                a.contrast,
                a.phase_deg.to_radians(),
            )
            .map_err(domain("fringe-fit"))?;
            let half = 4.0 * a.width_um;
            let x = uniform_grid(-half * MICRON, half * MICRON, a.spacing_um * MICRON);
            let n = synthesize_fringes(&model, &x, a.noise, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(domain("fringe-fit"))?;
            artifacts.push(Artifact::Csv {
                name: "profile.csv".into(),
                body: profile_csv(&x, &n),
            });
            (x, n)
        }
    };
    let fit = fit_modulated_gaussian(&x, &n).map_err(domain("fringe-fit"))?;
    artifacts.insert(0, json("fringe_fit.json", FringeFitRecord::from(&fit)));
    let m = ctx.manifest("fringe-fit", &cfg);
    ctx.finish(m, artifacts)
}

fn run_phase(ctx: &Ctx, a: &PhaseArgs) -> CliResult {
    let phases = match (&a.input, a.simulate) {
        (Some(p), _) => read_file(p, read_phases_csv, "phase-stats")?,
        (None, Some(n)) => {
            let seed = ctx.require_seed("phase simulation")?;
            wrapped_normal(n, 0.0, a.jitter_deg.to_radians(), &mut ChaCha8Rng::seed_from_u64(seed))
        }
        (None, None) => return Err(Failure::Usage("give --input or --simulate".into())),
    };
    let s = phase_statistics(&phases, a.bin_deg).map_err(domain("phase-stats"))?;
    let m = ctx.manifest("phase-stats", &None).override_param("bin_deg", a.bin_deg);
    ctx.finish(
        m,
        vec![
            json("phase_stats.json", PhaseStatsRecord::from(&s)),
            Artifact::Csv {
                name: "phase_histogram.csv".into(),
                body: histogram_csv(&s.histogram),
            },
        ],
    )
}

fn run_reproduce(ctx: &Ctx) -> CliResult {
    let seed = ctx.require_seed("reproduce-paper")?;
    let rows = reproduce_paper(seed).map_err(domain("reproduce-paper"))?;
    eprint!("{}", summary_table(&rows));
    let passed = rows.iter().filter(|r| r.pass).count();
    eprintln!("{passed}/{} checks within tolerance", rows.len());
    let m = ctx.manifest("reproduce-paper", &None);
    ctx.finish(
        m,
        vec![
            Artifact::Csv {
                name: "summary.csv".into(),
                body: summary_csv(&rows),
            },
            json("summary.json", &rows),
        ],
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let ctx = Ctx {
        config: cli.config.clone(),
        out: cli.out.clone(),
        seed: cli.seed,
        force: cli.force,
    };
    let result = match &cli.command {
        Command::FieldMap(a) => run_field_map(&ctx, a),
        Command::Trap(a) => run_trap(&ctx, a),
        Command::SplitScan(a) => run_split_scan(&ctx, a),
        Command::Roughness(a) => run_roughness(&ctx, a),
        Command::InvertDensity(a) => run_invert(&ctx, a),
        Command::Thermal(a) => run_thermal(&ctx, a),
        Command::FringeFit(a) => run_fringe(&ctx, a),
        Command::PhaseStats(a) => run_phase(&ctx, a),
        Command::ReproducePaper => run_reproduce(&ctx),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Domain(ctx, e)) => {
            eprintln!("error: {ctx}: {e}");
            ExitCode::from(1)
        }
    }
}
