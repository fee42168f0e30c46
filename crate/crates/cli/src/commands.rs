use std::path::Path;

use battlife::data::{
    load_csv, read_table_csv, standardize, synth_generate, write_table_csv, DataTable, Mapping, SplitSpec,
    SynthConfig,
};
use battlife::ensemble::write_weights_csv;
use battlife::evalkit::{compare_named, holdout_score, write_improvements_csv, EvalReport, HoldoutScore};
use battlife::featsel::{correlation_matrix, export_heatmap, prune_multicollinear, DEFAULT_COLLINEAR_THRESHOLD};
use battlife::interpret::{pdp, residual_hist, shap_rows, DEFAULT_BACKGROUND_ROWS};
use battlife::learners::{Learner, Model, Regressor};
use battlife::pipeline::{prepare, ModelFile};
use battlife::seed;
use battlife::tune::{random_search, SearchSpace};
use rand::seq::index::sample;
use serde::Serialize;

use crate::config::{DataSource, RunConfig};
use crate::{DataArgs, Failure};

type Outcome = Result<(), Failure>;

fn write_json<T: Serialize>(path: &Path, value: &T) -> Outcome {
    let text = serde_json::to_string_pretty(value).map_err(battlife::Error::from)?;
    std::fs::write(path, text + "\n").map_err(|e| Failure::from(battlife::Error::Io {
        path: path.into(),
        source: e,
    }))
}

fn synth_config(cfg: &RunConfig) -> SynthConfig {
    let mut sc = match &cfg.data {
        Some(DataSource::Synth(sc)) => sc.clone(),
        _ => SynthConfig::default(),
    };
    if let Some(s) = cfg.seed {
        sc.seed = s;
    }
    sc
}

fn load_csv_source(path: &Path, mapping: Option<&Path>) -> Result<DataTable, Failure> {
    let report = match mapping {
        Some(m) => {
            let mapping = Mapping::from_json_file(m).map_err(|e| Failure::usage(e.to_string()))?;
            load_csv(path, &mapping)?
        }
        None => read_table_csv(path)?,
    };
    if report.dropped > 0 {
        eprintln!("dropped {} invalid rows from {}", report.dropped, path.display());
    }
    Ok(report.table)
}

/// The run's table: flags first, then the config, then the default
/// synthetic dataset.
fn load_table(cfg: &RunConfig, args: &DataArgs) -> Result<DataTable, Failure> {
    if let Some(path) = &args.data {
        return load_csv_source(path, args.mapping.as_deref());
    }
    match &cfg.data {
        Some(DataSource::Csv { path, mapping }) => load_csv_source(path, mapping.as_deref()),
        _ => Ok(synth_generate(&synth_config(cfg))?.table),
    }
}

fn split_spec(cfg: &RunConfig) -> SplitSpec {
    SplitSpec {
        seed: cfg.seed(),
        ..cfg.split
    }
}

pub fn synth(cfg: &RunConfig, cells: Option<usize>, cycles: Option<usize>, noise: Option<f64>, output: &Path) -> Outcome {
    let mut sc = synth_config(cfg);
    sc.cells = cells.unwrap_or(sc.cells);
    sc.cycles_per_cell = cycles.unwrap_or(sc.cycles_per_cell);
    sc.noise_sigma = noise.unwrap_or(sc.noise_sigma);
    let ds = synth_generate(&sc)?;
    let path = cfg.out_dir().join(output);
    write_table_csv(&ds.table, &path)?;
    println!("wrote {} rows to {}", ds.table.len(), path.display());
    Ok(())
}

pub fn ingest(cfg: &RunConfig, args: &DataArgs) -> Outcome {
    let table = load_table(cfg, args)?;
    let path = cfg.out_dir().join("table.csv");
    write_table_csv(&table, &path)?;
    println!("wrote {} rows x {} features to {}", table.len(), table.n_features(), path.display());
    Ok(())
}

pub fn correlate(cfg: &RunConfig, args: &DataArgs, threshold: Option<f64>) -> Outcome {
    let raw = load_table(cfg, args)?;
    let table = if cfg.features.standardize {
        standardize(&raw, None)?
    } else {
        raw
    };
    let report = correlation_matrix(&table)?;
    let out = cfg.out_dir();
    export_heatmap(&report, &out.join("heatmap.csv"))?;
    let th = threshold
        .or(cfg.features.prune_threshold)
        .unwrap_or(DEFAULT_COLLINEAR_THRESHOLD);
    let pruned = prune_multicollinear(&report, th)?;
    write_json(&out.join("prune.json"), &pruned)?;
    let names: Vec<&str> = pruned.retained.iter().map(|f| f.as_str()).collect();
    println!("retained: {}", names.join(","));
    for d in &pruned.dropped {
        println!("dropped {} (|r| = {} with {})", d.feature, d.abs_r, d.peer);
    }
    Ok(())
}

pub fn train(cfg: &RunConfig, args: &DataArgs, family: Option<&str>) -> Outcome {
    let raw = load_table(cfg, args)?;
    let (table, preprocessing) = prepare(&raw, &cfg.features)?;
    let spec = match (family, &cfg.model) {
        (Some(f), _) => cfg.spec_for(f)?,
        (None, Some(s)) => s.reseeded(cfg.seed()),
        (None, None) => cfg.spec_for("se")?,
    };
    let mut model = spec.build();
    model.fit(&table)?;
    let out = cfg.out_dir();
    let file = ModelFile { preprocessing, model };
    file.save(&out.join("model.json"))?;
    println!("wrote {} model to {}", spec.kind(), out.join("model.json").display());
    if let Model::Stacked(se) = &file.model {
        if let Some(m) = se.model() {
            write_weights_csv(&m.names, &m.weights, &out.join("weights.csv"))?;
            for (name, w) in m.names.iter().zip(&m.weights.norm_w) {
                println!("  {name}: norm_w = {w}");
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct CompareOutput<'a> {
    /// Cross-validated scores on identical folds.
    cv: &'a EvalReport,
    /// Scores on held-out whole cells, separate from the CV aggregates.
    holdout: &'a [HoldoutScore],
}

pub fn compare(cfg: &RunConfig, args: &DataArgs) -> Outcome {
    if cfg.models.is_empty() {
        return Err(Failure::usage("no models to compare"));
    }
    let raw = load_table(cfg, args)?;
    let (table, _) = prepare(&raw, &cfg.features)?;
    let specs = cfg
        .models
        .iter()
        .map(|name| Ok((name.clone(), cfg.spec_for(name)?)))
        .collect::<battlife::Result<Vec<_>>>()?;
    let split = split_spec(cfg);
    let report = compare_named(&specs, &table, &split)?;
    let holdout = if cfg.holdout && table.cells().len() >= 2 {
        let hs = SplitSpec::holdout(cfg.seed());
        specs
            .iter()
            .map(|(name, spec)| holdout_score(name, spec, &table, &hs))
            .collect::<battlife::Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let out = cfg.out_dir();
    write_json(
        &out.join("report.json"),
        &CompareOutput {
            cv: &report,
            holdout: &holdout,
        },
    )?;
    report.write_csv(&out.join("report.csv"))?;
    write_improvements_csv(&report.improvements(), &out.join("improvements.csv"))?;
    println!("{:<8} {:>12} {:>12} {:>12}", "model", "r2", "mae", "rmse");
    for m in &report.models {
        println!("{:<8} {:>12.6} {:>12.6} {:>12.6}", m.name, m.mean.r2, m.mean.mae, m.mean.rmse);
    }
    for h in &holdout {
        println!("holdout {:<8} r2 {:.6} on {} rows", h.name, h.metrics.r2, h.n_test);
    }
    Ok(())
}

fn sample_rows(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut idx = sample(&mut seed::rng(seed), n, k.min(n)).into_vec();
    idx.sort_unstable();
    idx
}

pub fn explain(cfg: &RunConfig, args: &DataArgs, verify: bool) -> Outcome {
    let e = &cfg.explain;
    let out = cfg.out_dir();
    let model_path = e.model.clone().unwrap_or_else(|| out.join("model.json"));
    let file = ModelFile::load(&model_path)?;
    let table = load_table(cfg, args)?;
    let s = cfg.seed();
    let rows = sample_rows(table.len(), e.instances, seed::derive(s, &[1]));
    let background = sample_rows(table.len(), DEFAULT_BACKGROUND_ROWS, seed::derive(s, &[2]));
    let shap = shap_rows(&file, &table, &rows, &background, e.samples, s)?;
    let summary = shap.summary();
    shap.write_csv(&out.join("shap.csv"))?;
    write_json(&out.join("shap_summary.json"), &summary)?;
    summary.importance.write_csv(&out.join("importance.csv"))?;
    for entry in summary.importance.entries.iter().take(3) {
        println!("{:<12} {:.4}", entry.feature, entry.share);
    }

    let pdp_specs = if e.pdp.is_empty() {
        vec![summary.importance.entries[0].feature.to_string()]
    } else {
        e.pdp.clone()
    };
    for spec in &pdp_specs {
        let feats: Vec<&str> = spec.split(',').map(str::trim).collect();
        let grid = pdp(&file, &table, &feats, &[e.resolution])?;
        let path = out.join(format!("pdp_{}.csv", feats.join("_")));
        grid.write_csv(&path)?;
        println!("wrote {}", path.display());
    }

    let pred = file.predict(&table)?;
    residual_hist(&table.targets(), &pred, e.bins)?.write_csv(&out.join("residuals.csv"))?;

    let err = shap.efficiency_error();
    if verify && !(err <= 1e-9) {
        return Err(Failure::numerical(format!("attribution efficiency violated by {err}")));
    }
    Ok(())
}

pub fn tune(cfg: &RunConfig, args: &DataArgs) -> Outcome {
    let t = &cfg.tune;
    let space_path = t.space.as_ref().ok_or_else(|| Failure::usage("tune needs a search space (--space)"))?;
    let space = SearchSpace::from_json_file(space_path).map_err(|e| Failure::usage(format!("{}: {e}", space_path.display())))?;
    let raw = load_table(cfg, args)?;
    let (table, _) = prepare(&raw, &cfg.features)?;
    let result = random_search(&space, &t.family, &table, &split_spec(cfg), t.trials, cfg.seed())?;
    let out = cfg.out_dir();
    result.write_ledger(&out.join("trials.csv"))?;
    write_json(&out.join("best.json"), result.best_trial())?;
    let best = result.best_trial();
    println!(
        "best trial {} objective {} params {}",
        best.trial,
        best.objective.unwrap_or(f64::NAN),
        serde_json::Value::Object(best.params.clone())
    );
    Ok(())
}
