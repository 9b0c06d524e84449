//! The subcommands.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use lmx::analysis::{eda_compare_experiment, ordering_bias_experiment, write_eda_csv, AnalysisError, ParentOrder};
use lmx::backend::{Engine, SamplingParams};
use lmx::binary::{is_bits, variation_metrics, Codec};
use lmx::evolve::{ga_run, map_elites_run, EvolveError, MapElitesConfig};
use lmx::symreg::write_pareto_csv;
use lmx::{CoreError, RngStream, RunLog};

use crate::config::{EngineConfig, EngineKind, LoadedConfig, LoopConfig, SweepConfig};
use crate::engine::{apply_override, build_engine, GuardedEngine};
use crate::error::CliError;
use crate::output::{bar_chart, line_chart, write_atomic, Series};
use crate::setup::{build_domain, build_variation, sampling, BuiltDomain};

/// Settings shared by every command after flags are applied.
pub struct Context {
    pub loaded: LoadedConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub plot: bool,
    pub engine: EngineConfig,
}

impl Context {
    pub fn new(
        loaded: LoadedConfig,
        seed: Option<u64>,
        out_dir: Option<PathBuf>,
        no_plot: bool,
        engine_override: Option<&str>,
    ) -> Result<Self, CliError> {
        let c = &loaded.config;
        let loop_seed = match &c.run_loop {
            Some(LoopConfig::Ga(rc)) => Some(rc.seed),
            _ => None,
        };
        let seed = seed.or(c.seed).or(loop_seed).unwrap_or(0);
        let out_dir = out_dir.unwrap_or_else(|| loaded.resolve(&c.output.directory));
        let plot = c.output.plot && !no_plot;
        let engine = match engine_override {
            Some(spec) => apply_override(&c.engine, spec)?,
            None => c.engine.clone(),
        };
        Ok(Self {
            loaded,
            seed,
            out_dir,
            plot,
            engine,
        })
    }

    /// Bit encoding used when the config names none: underscore for real
    /// models, whose tokenizers may merge runs of digits, plain for mocks.
    pub fn default_codec(&self) -> Codec {
        match self.engine.kind {
            EngineKind::Http => Codec::Underscore,
            _ => Codec::Plain,
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn engine(&self, codec: Codec) -> Result<Arc<GuardedEngine>, CliError> {
        Ok(Arc::new(build_engine(&self.loaded, &self.engine, codec, self.seed)?))
    }

    /// Writes an SVG; a failure here is reported but never fails the run.
    fn plot(&self, name: &str, svg: impl FnOnce() -> String) {
        if !self.plot {
            return;
        }
        let path = self.path(name);
        if let Err(e) = write_atomic::<_, std::io::Error>(&path, |w| w.write_all(svg().as_bytes())) {
            eprintln!("warning: could not write plot {}: {e}", path.display());
        }
    }
}

fn unreachable_check(engine: &GuardedEngine) -> Result<(), CliError> {
    match engine.failure() {
        Some(e) => Err(CliError::Engine(format!("engine unreachable: {e}"))),
        None => Ok(()),
    }
}

fn core_error(loaded: &LoadedConfig, e: CoreError) -> CliError {
    match e {
        CoreError::InvalidConfig { field, reason } => loaded.field_error(&format!("loop.{field}"), reason),
        other => CliError::config(other.to_string()),
    }
}

fn evolve_error(loaded: &LoadedConfig, e: EvolveError) -> CliError {
    match e {
        EvolveError::Config(m) => loaded.field_error("loop", m),
        other => CliError::config(other.to_string()),
    }
}

fn analysis_error(e: AnalysisError) -> CliError {
    match e {
        AnalysisError::Engine(e) => e.into(),
        other => CliError::config(other.to_string()),
    }
}

fn write_csv_file<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    write_atomic(path, |w| {
        let mut out = csv::Writer::from_writer(w);
        for r in rows {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok::<(), CliError>(())
    })
}

pub fn cmd_run(ctx: &Context) -> Result<(), CliError> {
    let loaded = &ctx.loaded;
    let domain = build_domain(loaded, ctx.seed, ctx.default_codec())?;
    let engine = ctx.engine(domain.codec())?;
    let loop_cfg = loaded
        .config
        .run_loop
        .clone()
        .ok_or_else(|| loaded.field_error("loop", "`run` needs a loop section"))?;
    let mut log = RunLog::new();
    match loop_cfg {
        LoopConfig::Ga(mut rc) => {
            rc.seed = ctx.seed;
            rc.validate().map_err(|e| core_error(loaded, e))?;
            let variation = build_variation(loaded, &domain, engine.clone(), rc.offspring_cap)?;
            let out = ga_run(&rc, domain.as_domain(), variation.as_ref(), &mut log);
            unreachable_check(&engine)?;
            let out = out.map_err(|e| evolve_error(loaded, e))?;

            write_atomic(&ctx.path("history.csv"), |w| out.history.write_csv(w).map_err(CliError::from))?;
            write_atomic(&ctx.path("run.jsonl"), |w| log.write_jsonl(w).map_err(CliError::from))?;
            if let BuiltDomain::Symreg(sr) = &domain {
                let mut members = out.population.members.clone();
                members.push(out.elite.clone());
                let front = sr.pareto_report(&members);
                write_atomic(&ctx.path("pareto.csv"), |w| {
                    write_pareto_csv(&front, w).map_err(|e| CliError::Io(e.to_string()))
                })?;
            }
            ctx.plot("convergence.svg", || {
                let best = out.history.records.iter().map(|r| (r.generation as f64, r.best_fitness)).collect();
                let mean = out.history.records.iter().map(|r| (r.generation as f64, r.mean_fitness)).collect();
                line_chart(
                    &format!("{} / {}", domain.as_domain().name(), variation.name()),
                    "generation",
                    "fitness",
                    &[Series::new("best", best), Series::new("mean", mean)],
                )
            });
            println!(
                "best fitness {} after {} generations: {}",
                out.elite.fitness().unwrap_or(f64::NAN),
                out.history.records.len().saturating_sub(1),
                out.elite.genotype()
            );
        }
        LoopConfig::MapElites(m) => {
            let me = MapElitesConfig {
                dims: m.dims,
                budget: m.budget,
                strategy: m.strategy,
                batch_size: m.batch_size,
                initial_size: m.initial_size,
            };
            let variation = build_variation(loaded, &domain, engine.clone(), 3)?;
            let out = map_elites_run(ctx.seed, m.parents_per_call, &me, domain.as_domain(), variation.as_ref(), &mut log);
            unreachable_check(&engine)?;
            let out = out.map_err(|e| evolve_error(loaded, e))?;
            write_atomic(&ctx.path("history.csv"), |w| out.write_history_csv(w).map_err(CliError::from))?;
            write_atomic(&ctx.path("map.csv"), |w| out.map.write_csv(w).map_err(CliError::from))?;
            write_atomic(&ctx.path("run.jsonl"), |w| log.write_jsonl(w).map_err(CliError::from))?;
            ctx.plot("qd.svg", || {
                let qd = out.history.iter().map(|c| (c.evaluations as f64, c.qd_score)).collect();
                line_chart("MAP-Elites", "evaluations", "QD score", &[Series::new("QD score", qd)])
            });
            match out.map.best() {
                Some(best) => println!(
                    "QD score {} over {} niches; best fitness {}: {}",
                    out.map.qd_score(),
                    out.map.niches_filled(),
                    best.fitness().unwrap_or(f64::NAN),
                    best.genotype()
                ),
                None => println!("map is empty"),
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    parents: usize,
    valid_pct: f64,
    novel_count: usize,
}

fn read_parents(path: &Path) -> Result<Vec<String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read parents file {}: {e}", path.display())))?;
    let parents: Vec<String> = text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect();
    let Some(first) = parents.first() else {
        return Err(CliError::config(format!("parents file {} is empty", path.display())));
    };
    for (i, p) in parents.iter().enumerate() {
        if !is_bits(p) || p.len() != first.len() {
            return Err(CliError::config(format!(
                "{}:{}: expected a bitstring of length {}, got {p:?}",
                path.display(),
                i + 1,
                first.len()
            )));
        }
    }
    Ok(parents)
}

pub fn cmd_variation(ctx: &Context, parents_path: &Path) -> Result<(), CliError> {
    let loaded = &ctx.loaded;
    let parents = read_parents(parents_path)?;
    let domain = match &loaded.config.domain {
        Some(_) => Some(build_domain(loaded, ctx.seed, ctx.default_codec())?),
        None => None,
    };
    let codec = domain.as_ref().map_or(ctx.default_codec(), BuiltDomain::codec);
    let sweep = loaded.config.sweep.clone().unwrap_or(SweepConfig {
        min_parents: 1,
        max_parents: parents.len(),
        trials: 20,
        children_per_trial: 3,
    });
    if sweep.min_parents == 0 || sweep.min_parents > sweep.max_parents {
        return Err(loaded.field_error("sweep.min_parents", "must lie in [1, max_parents]"));
    }
    if sweep.max_parents > parents.len() {
        return Err(loaded.field_error(
            "sweep.max_parents",
            format!("exceeds the {} parents in {}", parents.len(), parents_path.display()),
        ));
    }
    if sweep.trials == 0 || sweep.children_per_trial == 0 {
        return Err(loaded.field_error("sweep", "trials and children_per_trial must be at least 1"));
    }
    let params = match &domain {
        Some(d) => sampling(loaded, Some(d))?,
        None => match &loaded.config.sampling {
            Some(_) => sampling(loaded, None)?,
            None => SamplingParams::binary_defaults(),
        },
    };
    let engine = ctx.engine(codec)?;
    let root = RngStream::new(ctx.seed, "variation");
    let mut rows = Vec::new();
    for m in sweep.min_parents..=sweep.max_parents {
        let mut rng = root.child(format!("m{m}"));
        let metrics = variation_metrics(
            &parents[..m],
            engine.as_ref(),
            sweep.trials,
            sweep.children_per_trial,
            codec,
            &params,
            &mut rng,
        );
        rows.push(SweepRow {
            parents: m,
            valid_pct: metrics.valid_pct,
            novel_count: metrics.novel_count,
        });
    }
    unreachable_check(&engine)?;
    write_csv_file(&ctx.path("variation.csv"), &rows)?;
    ctx.plot("variation.svg", || {
        let valid = rows.iter().map(|r| (r.parents as f64, r.valid_pct)).collect();
        let novel = rows.iter().map(|r| (r.parents as f64, r.novel_count as f64)).collect();
        line_chart(
            "variation",
            "parents in prompt",
            "percent valid / novel offspring",
            &[Series::new("valid %", valid), Series::new("novel", novel)],
        )
    });
    for r in &rows {
        println!("parents {}: {:.1}% valid, {} novel", r.parents, r.valid_pct, r.novel_count);
    }
    Ok(())
}

fn require_logprobs(engine: &dyn Engine) -> Result<(), CliError> {
    if engine.supports_logprobs() {
        Ok(())
    } else {
        Err(CliError::Capability(format!(
            "engine '{}' cannot report next-token probabilities (logprobs)",
            engine.name()
        )))
    }
}

pub fn cmd_eda_compare(ctx: &Context) -> Result<(), CliError> {
    let loaded = &ctx.loaded;
    let eda = loaded
        .config
        .eda
        .clone()
        .ok_or_else(|| loaded.field_error("eda", "`eda-compare` needs an eda section"))?;
    if eda.length == 0 {
        return Err(loaded.field_error("eda.length", "must be at least 1"));
    }
    if eda.parent_counts.is_empty() || eda.parent_counts.contains(&0) {
        return Err(loaded.field_error("eda.parent_counts", "must be a non-empty list of positive counts"));
    }
    if eda.repeats == 0 {
        return Err(loaded.field_error("eda.repeats", "must be at least 1"));
    }
    let codec = eda.codec.unwrap_or(ctx.default_codec());
    let engine = ctx.engine(codec)?;
    require_logprobs(engine.as_ref())?;
    let rows = eda_compare_experiment(eda.length, &eda.parent_counts, eda.repeats, engine.as_ref(), codec, ctx.seed);
    unreachable_check(&engine)?;
    let rows = rows.map_err(analysis_error)?;
    write_atomic(&ctx.path("eda.csv"), |w| write_eda_csv(&rows, w).map_err(CliError::from))?;
    ctx.plot("eda.svg", || {
        let pts = rows.iter().map(|r| (r.parents as f64, r.mean_abs_diff)).collect();
        line_chart(
            "implied vs explicit marginals",
            "parents",
            "mean absolute difference",
            &[Series::new("mean |diff|", pts)],
        )
    });
    for r in &rows {
        println!("parents {}: mean |diff| {:.6} (sd {:.6})", r.parents, r.mean_abs_diff, r.std_dev);
    }
    Ok(())
}

pub fn cmd_order_bias(ctx: &Context) -> Result<(), CliError> {
    let loaded = &ctx.loaded;
    let setup = loaded
        .config
        .order_bias
        .as_ref()
        .ok_or_else(|| loaded.field_error("order_bias", "`order-bias` needs an order_bias section"))?
        .setup(ctx.default_codec());
    for (field, v) in [
        ("order_bias.length", setup.length),
        ("order_bias.experiments", setup.experiments),
        ("order_bias.children_per_experiment", setup.children_per_experiment),
        ("order_bias.parents_per_set", setup.parents_per_set),
    ] {
        if v == 0 {
            return Err(loaded.field_error(field, "must be at least 1"));
        }
    }
    let params = match &loaded.config.sampling {
        Some(_) => sampling(loaded, None)?,
        None => SamplingParams::binary_defaults(),
    };
    let engine = ctx.engine(setup.codec)?;
    let table = ordering_bias_experiment(&setup, &ParentOrder::ALL, engine.as_ref(), &params, ctx.seed);
    unreachable_check(&engine)?;
    write_atomic(&ctx.path("order_bias.csv"), |w| table.write_csv(w).map_err(CliError::from))?;
    ctx.plot("order_bias.svg", || {
        let groups: Vec<(&str, Vec<usize>)> =
            table.counts.iter().map(|(o, c)| (o.as_str(), c.clone())).collect();
        bar_chart("offspring score by parent order", "score", "children", &groups)
    });
    for o in ParentOrder::ALL {
        match table.mean_score(o) {
            Some(m) => println!("{}: {} children, mean score {m:.3}", o.as_str(), table.total(o)),
            None => println!("{}: no children", o.as_str()),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn context(engine: &str, codec: Option<&str>) -> Context {
        let codec = codec.map_or(String::new(), |c| format!(r#", "codec": "{c}""#));
        let text = format!(
            r#"{{"engine": {engine}, "domain": {{"kind": "binary", "length": 4{codec}}},
                "order_bias": {{"length": 4, "sort_key": "ones", "experiments": 1,
                                "children_per_experiment": 1, "parents_per_set": 2}}}}"#
        );
        let loaded = LoadedConfig::parse(Path::new("t.json"), text).unwrap();
        Context::new(loaded, None, None, true, None).unwrap()
    }

    #[test]
    fn real_models_default_to_the_underscore_codec() {
        let http = context(r#"{"kind": "http", "endpoint": "http://127.0.0.1:1/v1/completions"}"#, None);
        assert_eq!(http.default_codec(), Codec::Underscore);
        let domain = build_domain(&http.loaded, 0, http.default_codec()).unwrap();
        assert_eq!(domain.codec(), Codec::Underscore);
        let setup = http.loaded.config.order_bias.as_ref().unwrap().setup(http.default_codec());
        assert_eq!(setup.codec, Codec::Underscore);

        let mock = context(r#"{"kind": "umda-mock"}"#, None);
        assert_eq!(mock.default_codec(), Codec::Plain);
        assert_eq!(build_domain(&mock.loaded, 0, mock.default_codec()).unwrap().codec(), Codec::Plain);

        let explicit = context(r#"{"kind": "umda-mock"}"#, Some("underscore"));
        assert_eq!(build_domain(&explicit.loaded, 0, explicit.default_codec()).unwrap().codec(), Codec::Underscore);
    }
}
