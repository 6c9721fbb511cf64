//! Batch command-line front end: `fit`, `evaluate`, `importance`, `profile`
//! and `simulate`. Every output lands under `--out DIR` and is written
//! atomically.

mod config;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

pub use config::{lag_name, ForestSettings, GrowSettings, RunConfig, SimulateConfig, Variant};

use crate::data::{build_dataset, load_csv, Dataset, DatasetManifest};
use crate::engine::{self, fit_baseline, simulate, FitOptions, GasParams, ModelSpec, StateGenerator};
use crate::error::{Error, Result};
use crate::evaluation::{self, emit_report, importance_csv, variable_importance};
use crate::forest::{
    fit_forest, parameter_profile, profile_csv, tree_file_name, BootstrapPlan, ForestManifest,
    ForestTree, GasForest, Resample, Transform,
};
use crate::series::Series;
use crate::tree::{grow, tune_depth, RegimeTree, TuneInput};

#[derive(Debug, Parser)]
#[command(name = "gastree", version, about = "GAS models with tree- and forest-localized parameters")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Override a config key, e.g. `--set forest.n_trees=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the configured variant on the estimation segment.
    Fit(Common),
    /// Test-segment losses and pairwise DM statistics for fitted models.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Model directories written by `fit`; the directory name labels
        /// the model in the report.
        #[arg(required = true)]
        models: Vec<PathBuf>,
    },
    /// Leave-one-out importance of each state variable for the forest.
    Importance(Common),
    /// Binned forest parameters along one state variable.
    Profile {
        #[command(flatten)]
        common: Common,
        /// Directory written by `fit`.
        #[arg(long)]
        model: PathBuf,
        /// State variable to bin on.
        #[arg(long)]
        variable: String,
        /// long_run, persistence, alpha or forecast.
        #[arg(long, default_value = "long_run")]
        transform: String,
    },
    /// Simulate data from the `[simulate]` section into `simulated.csv`.
    Simulate(Common),
}

/// Parses arguments, runs the command and returns the process exit code:
/// 0 on success, 1 for user errors, 2 for internal failures.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_user_error() {
                1
            } else {
                2
            }
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit(c) => {
            let cfg = setup(&c)?;
            cmd_fit(&cfg, &c.out)
        }
        Command::Evaluate { common, models } => {
            let cfg = setup(&common)?;
            cmd_evaluate(&cfg, &models, &common.out)
        }
        Command::Importance(c) => {
            let cfg = setup(&c)?;
            cmd_importance(&cfg, &c.out)
        }
        Command::Profile {
            common,
            model,
            variable,
            transform,
        } => {
            let cfg = setup(&common)?;
            cmd_profile(&cfg, &model, &variable, transform.parse()?, &common.out)
        }
        Command::Simulate(c) => {
            let cfg = setup(&c)?;
            cmd_simulate(&cfg, &c.out)
        }
    }
}

fn setup(c: &Common) -> Result<RunConfig> {
    let cfg = RunConfig::load(&c.config, &c.overrides)?;
    if let Some(n) = cfg.threads {
        // Fails only if a pool already exists, e.g. on a second in-process
        // run; results do not depend on the thread count.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    std::fs::create_dir_all(&c.out).map_err(|e| Error::io(&c.out, e))?;
    Ok(cfg)
}

/// Writes through a temporary file in the same directory and renames it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&s)?)
}

fn to_json<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s.into_bytes())
}

struct Loaded {
    ds: Dataset,
    manifest: DatasetManifest,
    hash: String,
}

fn load_data(cfg: &RunConfig) -> Result<Loaded> {
    let dcfg = cfg.dataset_config()?;
    let raw = load_csv(Path::new(&dcfg.path), &dcfg.source_columns(), dcfg.time_column.as_deref())?;
    let ds = build_dataset(&raw, &dcfg)?;
    if ds.y.dim() != if cfg.family.is_bivariate() { 2 } else { 1 } {
        return Err(Error::Config(format!(
            "{} needs {} dependent column(s)",
            cfg.family,
            if cfg.family.is_bivariate() { 2 } else { 1 }
        )));
    }
    let manifest = DatasetManifest::new(&raw, &dcfg, &ds);
    let hash = manifest.hash()?;
    Ok(Loaded { ds, manifest, hash })
}

fn tune_input<'a>(ds: &'a Dataset) -> TuneInput<'a> {
    TuneInput {
        y: ds.y(),
        z: &ds.z,
        names: &ds.names,
        proxy: ds.proxy.as_deref(),
        est_end: ds.splits.estimation_end,
        val_end: ds.splits.validation_end,
    }
}

fn state_indices(ds: &Dataset, names: &[String]) -> Result<Vec<usize>> {
    names.iter().map(|n| ds.column_index(n)).collect()
}

/// Contents of `model.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub variant: Variant,
    pub family: crate::score::Family,
    /// Hash of the dataset manifest the model was fitted on.
    pub dataset_hash: String,
    /// Starting value of the filter, from the estimation window.
    pub f0: f64,
    pub state_vars: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_depth: Option<usize>,
    /// Mean validation loss per M; `None` where the filter diverged.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub validation_loss: Vec<(usize, Option<f64>)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<GasParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree: Option<RegimeTree>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forest: Option<ForestManifest>,
}

const MODEL_FILE: &str = "model.json";
const DATASET_FILE: &str = "dataset.json";
const TREE_DIR: &str = "trees";

/// Chooses M: the configured value, or validation tuning of a single tree.
fn choose_depth(
    cfg: &RunConfig,
    spec: &ModelSpec,
    ds: &Dataset,
    vars: &[usize],
) -> Result<(usize, Vec<(usize, Option<f64>)>, Option<RegimeTree>)> {
    if let Some(m) = cfg.max_depth {
        return Ok((m, Vec::new(), None));
    }
    let res = tune_depth(spec, &tune_input(ds), vars, &cfg.m_grid, &cfg.grow_config(1), cfg.loss())?;
    let vl = res
        .validation_loss
        .iter()
        .map(|&(m, v)| (m, v.is_finite().then_some(v)))
        .collect();
    Ok((res.max_depth, vl, Some(res.tree)))
}

pub fn cmd_fit(cfg: &RunConfig, out: &Path) -> Result<()> {
    let data = load_data(cfg)?;
    let ds = &data.ds;
    let spec = ModelSpec::new(cfg.family);
    let est = ds.splits.estimation_end;
    let y_est = ds.y.slice(0..est);
    let f0 = engine::initial_state(cfg.family, y_est)?;
    let state_vars = cfg.state_names()?;
    let vars = state_indices(ds, &state_vars)?;
    let mut model = ModelFile {
        variant: cfg.variant,
        family: cfg.family,
        dataset_hash: data.hash.clone(),
        f0,
        state_vars: state_vars.clone(),
        max_depth: None,
        validation_loss: Vec::new(),
        params: None,
        tree: None,
        forest: None,
    };
    let mut tree_files = Vec::new();
    match cfg.variant {
        Variant::Gas => {
            model.params = Some(fit_baseline(&spec, y_est, f0, &FitOptions::default())?.params);
        }
        Variant::Tree | Variant::SmallTree => {
            let (m, vl, tuned) = choose_depth(cfg, &spec, ds, &vars)?;
            let tree = match tuned {
                Some(t) => t,
                None => grow(&spec, y_est, &ds.z[..est], &ds.names, &vars, &cfg.grow_config(m))?.tree,
            };
            model.max_depth = Some(m);
            model.validation_loss = vl;
            model.tree = Some(tree);
        }
        Variant::Forest => {
            let (m, vl, _) = choose_depth(cfg, &spec, ds, &vars)?;
            let forest = fit_forest(&spec, y_est, &ds.z[..est], &ds.names, &vars, &cfg.plan(), &cfg.grow_config(m))?;
            if !forest.dropped.is_empty() {
                log::warn!("{} of {} trees dropped", forest.dropped.len(), cfg.plan().n_trees);
            }
            for t in &forest.trees {
                tree_files.push((tree_file_name(t.index), t.tree.to_json()?));
            }
            model.max_depth = Some(m);
            model.validation_loss = vl;
            model.forest = Some(forest.manifest());
        }
    }
    for (name, json) in tree_files {
        write_atomic(&out.join(TREE_DIR).join(name), (json + "\n").as_bytes())?;
    }
    write_atomic(&out.join(DATASET_FILE), &to_json(&data.manifest)?)?;
    write_atomic(&out.join("run_config.toml"), run_config_text(cfg)?.as_bytes())?;
    write_atomic(&out.join(MODEL_FILE), &to_json(&model)?)
}

fn run_config_text(cfg: &RunConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::Config(format!("serializing config: {e}")))
}

/// A fitted model reloaded from its directory, as a forest: plain GAS and
/// single trees become one-tree forests.
pub fn load_model(dir: &Path) -> Result<(ModelFile, GasForest)> {
    let model: ModelFile = read_json(&dir.join(MODEL_FILE))?;
    let single = |tree: RegimeTree| GasForest {
        family: model.family,
        plan: BootstrapPlan {
            n_trees: 1,
            feature_fraction: 1.0,
            resample: Resample::Identity,
            ..BootstrapPlan::default()
        },
        max_depth: model.max_depth.unwrap_or(1),
        trees: vec![ForestTree {
            index: 0,
            seed: 0,
            features: model.state_vars.clone(),
            tree,
        }],
        dropped: Vec::new(),
    };
    let forest = match (&model.params, &model.tree, &model.forest) {
        (Some(p), None, None) => single(RegimeTree::single(model.family, p)),
        (None, Some(t), None) => {
            t.validate()?;
            single(t.clone())
        }
        (None, None, Some(m)) => GasForest::from_manifest(m.clone(), |file| {
            let p = dir.join(TREE_DIR).join(file);
            RegimeTree::from_json(&std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?)
        })?,
        _ => return Err(Error::Data(format!("{}: malformed model file", dir.display()))),
    };
    if forest.family != model.family {
        return Err(Error::Data("model family does not match its trees".into()));
    }
    Ok((model, forest))
}

fn model_label(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

pub fn cmd_evaluate(cfg: &RunConfig, models: &[PathBuf], out: &Path) -> Result<()> {
    let data = load_data(cfg)?;
    let ds = &data.ds;
    let input = tune_input(ds);
    let mut losses = Vec::with_capacity(models.len());
    for dir in models {
        let (model, forest) = load_model(dir)?;
        if model.dataset_hash != data.hash {
            return Err(Error::Config(format!(
                "{} was fitted on a different dataset (manifest hash mismatch)",
                dir.display()
            )));
        }
        if model.family != cfg.family {
            return Err(Error::Config(format!("{} is a {} model", dir.display(), model.family)));
        }
        let l = evaluation::forest_test_losses(&forest, &input, cfg.loss())?;
        losses.push((model_label(dir), l));
    }
    let rep = emit_report(&losses)?;
    write_atomic(&out.join("report.csv"), rep.csv.as_bytes())?;
    write_atomic(&out.join("report.txt"), rep.text.as_bytes())
}

pub fn cmd_importance(cfg: &RunConfig, out: &Path) -> Result<()> {
    let data = load_data(cfg)?;
    let ds = &data.ds;
    let spec = ModelSpec::new(cfg.family);
    let names: Vec<String> = cfg.data()?.state.iter().map(|s| s.name.clone()).collect();
    let vars = state_indices(ds, &names)?;
    let (m, _, _) = choose_depth(cfg, &spec, ds, &vars)?;
    let rows = variable_importance(&spec, &tune_input(ds), &vars, &cfg.plan(), &cfg.grow_config(m), cfg.loss())?;
    write_atomic(&out.join("importance.csv"), importance_csv(&rows)?.as_bytes())
}

pub fn cmd_profile(cfg: &RunConfig, model_dir: &Path, variable: &str, transform: Transform, out: &Path) -> Result<()> {
    let data = load_data(cfg)?;
    let ds = &data.ds;
    let (model, forest) = load_model(model_dir)?;
    if model.dataset_hash != data.hash {
        return Err(Error::Config(format!(
            "{} was fitted on a different dataset (manifest hash mismatch)",
            model_dir.display()
        )));
    }
    let bins = parameter_profile(&forest, ds.y(), &ds.names, &ds.z, model.f0, variable, transform)?;
    let tname = serde_json::to_value(transform)?
        .as_str()
        .unwrap_or("value")
        .to_string();
    write_atomic(&out.join(format!("profile_{variable}_{tname}.csv")), profile_csv(&bins)?.as_bytes())
}

/// Writes `simulated.csv`. Row t holds y_t, f_t, the proxy and the state
/// values dated t; the dataset builder's one-period lag then pairs y_t with
/// the state that drove f_t.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let sc = cfg
        .simulate
        .as_ref()
        .ok_or_else(|| Error::Config("simulate needs a [simulate] section".into()))?;
    let family = cfg.family;
    let leaves = sc.leaf_params();
    let params = GasParams {
        leaves: leaves.clone(),
        nu: if family.has_nu() { sc.nu.or(Some(8.0)) } else { None },
    };
    let zgen = StateGenerator::new(sc.k, sc.phi);
    let names = zgen.names();
    let col = match (&sc.split_variable, leaves.len()) {
        (_, 1) => None,
        (Some(v), 2) => Some(
            names
                .iter()
                .position(|n| n == v)
                .ok_or_else(|| Error::Config(format!("split variable `{v}` is not one of {names:?}")))?,
        ),
        _ => return Err(Error::Config("simulate takes one leaf, or two leaves and a split_variable".into())),
    };
    let thr = sc.threshold;
    let sim = simulate(
        &ModelSpec::new(family),
        &params,
        |row| col.map_or(0, |c| usize::from(row[c] > thr)),
        sc.t + 1,
        cfg.seed,
        &zgen,
    )?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    match &sim.y {
        Series::Univariate(_) => header.push("y".into()),
        Series::Bivariate(_) => header.extend(["u1".to_string(), "u2".to_string()]),
    }
    header.extend(names.iter().cloned());
    header.push("f".into());
    if sim.proxy.is_some() {
        header.push("rv".into());
    }
    w.write_record(&header)?;
    for t in 0..sc.t {
        let mut rec = vec![t.to_string()];
        match &sim.y {
            Series::Univariate(v) => rec.push(v[t].to_string()),
            Series::Bivariate(v) => rec.extend([v[t][0].to_string(), v[t][1].to_string()]),
        }
        rec.extend(sim.z[t + 1].iter().map(|v| v.to_string()));
        rec.push(sim.f[t].to_string());
        if let Some(p) = &sim.proxy {
            rec.push(p[t].to_string());
        }
        w.write_record(&rec)?;
    }
    let text = evaluation::into_string(w)?;
    write_atomic(&out.join("simulated.csv"), text.as_bytes())
}
