use std::fmt::Write as _;

use serde::Serialize;

use super::config::digest;
use super::manifest::{manifest_path, ManifestBuilder};
use super::{emit, CliError, GenerateArgs, SimulateArgs};
use crate::design::DeterministicSpec;
use crate::models::{EstimatorKind, ModelSettings};
use crate::simulation::{gen_factor, gen_vecm, run_monte_carlo, DgpFamily, DgpSpec, McConfig, MetricsReport, Persistence};

/// Everything that determines the report. Thread count and output path are
/// deliberately absent.
#[derive(Debug, Clone, Serialize)]
struct SimulateConfig {
    spec: DgpSpec,
    estimators: Vec<EstimatorKind>,
    k_delta: f64,
    k_pi: f64,
    n_lambda_i: usize,
    eps_ratio: f64,
    wald: bool,
    wald_draws: usize,
    reps: usize,
    seed: u64,
    keep_reps: bool,
}

impl SimulateConfig {
    fn from_args(a: &SimulateArgs) -> Result<Self, CliError> {
        let family = DgpFamily::parse(a.family.as_deref().unwrap_or("table2_low_we"))?;
        let mut spec = DgpSpec::new(family, a.a.unwrap_or(-0.5), a.t.unwrap_or(100));
        spec.persistence = Persistence::parse(a.persistence.as_deref().unwrap_or("low"))?;
        spec.burn_in = a.burn_in.unwrap_or(spec.burn_in);
        spec.p = a.lags.unwrap_or(spec.p);
        if let Some(d) = &a.det {
            spec.deterministic = DeterministicSpec::parse(d)?;
        }
        spec.factor.phi = a.phi.unwrap_or(spec.factor.phi);
        spec.factor.dynamics = a.dynamics.unwrap_or(spec.factor.dynamics);
        spec.validate()?;
        let default_list = if family.is_vecm() { "specs1,adl" } else { "specs1" };
        let settings = ModelSettings::default();
        let mc = McConfig::default();
        Ok(Self {
            spec,
            estimators: EstimatorKind::parse_list(a.estimators.as_deref().unwrap_or(default_list))?,
            k_delta: a.k_delta.unwrap_or(settings.weights.k_delta),
            k_pi: a.k_pi.unwrap_or(settings.weights.k_pi),
            n_lambda_i: a.n_lambda_i.unwrap_or(settings.grid.n_lambda_i),
            eps_ratio: a.eps_ratio.unwrap_or(settings.grid.eps_ratio),
            wald: a.wald.unwrap_or(false),
            wald_draws: a.wald_draws.unwrap_or(mc.wald_draws),
            reps: a.reps.unwrap_or(mc.n_reps),
            seed: a.seed.unwrap_or(mc.base_seed),
            keep_reps: a.keep_reps.unwrap_or(true),
        })
    }

    fn mc_config(&self, jobs: Option<usize>) -> McConfig {
        let mut settings = ModelSettings::default();
        settings.weights.k_delta = self.k_delta;
        settings.weights.k_pi = self.k_pi;
        settings.grid.n_lambda_i = self.n_lambda_i;
        settings.grid.eps_ratio = self.eps_ratio;
        McConfig {
            estimators: self.estimators.clone(),
            n_reps: self.reps,
            base_seed: self.seed,
            settings,
            wald: self.wald,
            wald_draws: self.wald_draws,
            jobs,
        }
    }
}

#[derive(Debug, Serialize)]
struct SimulateOutput {
    command: &'static str,
    config_digest: String,
    manifest: Option<String>,
    #[serde(flatten)]
    report: MetricsReport,
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.digits$}"))
}

/// Plain-text summary of a Monte Carlo report.
pub fn summary_table(r: &MetricsReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} a={} T={} reps={} ok={} failed={} seed={} baseline={}",
        r.spec.family, r.spec.a, r.spec.t, r.n_reps, r.n_ok, r.n_failed, r.base_seed, r.baseline
    );
    let _ = writeln!(
        s,
        "{:<11}{:>10}{:>10}{:>14}{:>8}{:>8}{:>9}",
        "estimator", "rmsne", "msne", "pseudo-power", "pcs", "pics", "mean-df"
    );
    for e in &r.summaries {
        let _ = writeln!(
            s,
            "{:<11}{:>10}{:>10}{:>14}{:>8}{:>8}{:>9}",
            e.estimator.name(),
            opt(e.rmsne, 4),
            opt(e.msne, 4),
            opt(e.pseudo_power, 3),
            opt(e.pcs, 3),
            opt(e.pics, 3),
            opt(e.mean_df, 2)
        );
    }
    for (name, w) in [("wald", &r.wald), ("wald-ps", &r.wald_ps)] {
        if let Some(w) = w {
            let _ = writeln!(s, "{name}: rejection rate {:.3} over {} tests", w.rejection_rate, w.n_tests);
        }
    }
    s
}

pub(super) fn run(args: SimulateArgs) -> Result<(), CliError> {
    let cfg = SimulateConfig::from_args(&args)?;
    if args.jobs == Some(0) {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let mut mb = ManifestBuilder::start("simulate");
    let mut report = run_monte_carlo(&cfg.spec, &cfg.mc_config(args.jobs))?;
    mb.stage("monte_carlo");
    if !cfg.keep_reps {
        report.reps.clear();
    }
    let table = summary_table(&report);
    let config_digest = digest(&cfg);
    let seeds = report.seeds.clone();
    let out = SimulateOutput {
        command: "simulate",
        config_digest: config_digest.clone(),
        manifest: args
            .out
            .as_ref()
            .and_then(|o| manifest_path(o).file_name().map(|s| s.to_string_lossy().into_owned())),
        report,
    };
    let manifest = mb.finish(
        config_digest,
        serde_json::to_value(&cfg).expect("config serializes"),
        None,
        seeds,
        args.out.iter().cloned().collect(),
    );
    if args.out.is_some() {
        print!("{table}");
    } else {
        eprint!("{table}");
    }
    emit(&out, args.out.as_ref(), manifest)
}

pub(super) fn generate(args: GenerateArgs) -> Result<(), CliError> {
    let mut spec = DgpSpec::new(DgpFamily::parse(&args.family)?, args.a, args.t);
    spec.persistence = Persistence::parse(&args.persistence)?;
    spec.validate()?;
    let panel = if spec.family.is_vecm() { gen_vecm(&spec, args.seed)?.0 } else { gen_factor(&spec, args.seed)? };
    let mut w = csv::Writer::from_writer(Vec::new());
    let write_err = |e: csv::Error| CliError::Usage(format!("csv: {e}"));
    let mut header = vec!["date".to_string()];
    header.extend(panel.labels().iter().cloned());
    w.write_record(&header).map_err(write_err)?;
    for i in 0..panel.n_obs() {
        let mut rec = vec![format!("t{:04}", i + 1)];
        rec.extend(panel.values().row(i).iter().map(|x| format!("{x:.17e}")));
        w.write_record(&rec).map_err(write_err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Usage(format!("csv: {e}")))?;
    match &args.out {
        Some(p) => std::fs::write(p, bytes).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{}", String::from_utf8_lossy(&bytes));
            Ok(())
        }
    }
}
