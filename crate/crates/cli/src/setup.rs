//! Turning config sections into domains, variation operators and
//! sampling settings.

use std::sync::Arc;

use lmx::backend::{Engine, SamplingParams};
use lmx::binary::{BinaryDomain, BitstringSpec, Codec, OnePointCrossover};
use lmx::operator::{Lmx, OffspringParser, PromptTemplate, TextCodec, Variation};
use lmx::symreg::{
    evaluate, parse_benchmarks, parse_expression, RegressionDataset, SubtreeCrossover, SymregDomain,
    BUNDLED_BENCHMARKS,
};
use lmx::{Domain, RngStream};

use crate::config::{DomainConfig, LoadedConfig, VariationKind};
use crate::error::CliError;

pub enum BuiltDomain {
    Binary(BinaryDomain),
    Symreg(SymregDomain),
}

impl BuiltDomain {
    pub fn as_domain(&self) -> &dyn Domain {
        match self {
            BuiltDomain::Binary(d) => d,
            BuiltDomain::Symreg(d) => d,
        }
    }

    pub fn codec(&self) -> Codec {
        match self {
            BuiltDomain::Binary(d) => d.spec.codec,
            BuiltDomain::Symreg(_) => Codec::Plain,
        }
    }

    pub fn default_template(&self) -> PromptTemplate {
        match self {
            BuiltDomain::Binary(_) => PromptTemplate::default(),
            BuiltDomain::Symreg(_) => PromptTemplate::symreg(),
        }
    }

    pub fn default_sampling(&self) -> SamplingParams {
        match self {
            BuiltDomain::Binary(_) => SamplingParams::binary_defaults(),
            BuiltDomain::Symreg(_) => SamplingParams::symreg_defaults(),
        }
    }

    /// Offspring extraction matching the domain's genotype syntax.
    pub fn parser(&self, max_children: usize) -> OffspringParser {
        match self {
            BuiltDomain::Binary(d) => {
                let spec = d.spec;
                OffspringParser::new(max_children, move |b: &str| spec.is_valid(b))
                    .with_codec(TextCodec::Bits(spec.codec))
            }
            BuiltDomain::Symreg(_) => {
                OffspringParser::new(max_children, |t: &str| parse_expression(t).is_ok())
            }
        }
    }
}

/// `default_codec` applies when a binary domain leaves its codec unset.
pub fn build_domain(loaded: &LoadedConfig, seed: u64, default_codec: Codec) -> Result<BuiltDomain, CliError> {
    let Some(cfg) = &loaded.config.domain else {
        return Err(loaded.field_error("domain", "this command needs a domain section"));
    };
    match cfg {
        DomainConfig::Binary {
            length,
            fitness,
            codec,
            descriptor,
        } => {
            if *length == 0 {
                return Err(loaded.field_error("domain.length", "must be at least 1"));
            }
            Ok(BuiltDomain::Binary(BinaryDomain {
                spec: BitstringSpec::new(*length, codec.unwrap_or(default_codec)),
                fitness: *fitness,
                descriptor: *descriptor,
            }))
        }
        DomainConfig::Symreg {
            dataset,
            synthetic,
            benchmarks,
            test_fraction,
        } => {
            let data = match (dataset, synthetic) {
                (Some(path), None) => {
                    let path = loaded.resolve(path);
                    if !path.exists() {
                        return Err(loaded.field_error(
                            "domain.dataset",
                            format!("dataset not found: {}", path.display()),
                        ));
                    }
                    RegressionDataset::from_csv_path(&path)
                        .map_err(|e| loaded.field_error("domain.dataset", e))?
                }
                (None, Some(s)) => {
                    let expr = parse_expression(&s.expression)
                        .map_err(|e| loaded.field_error("domain.synthetic.expression", e))?;
                    let vars = s.variables.unwrap_or(expr.max_var()).max(1);
                    if expr.max_var() > vars {
                        return Err(loaded.field_error(
                            "domain.synthetic.variables",
                            format!("expression uses x{} but only {vars} variables exist", expr.max_var()),
                        ));
                    }
                    let mut rng = RngStream::new(seed, "dataset");
                    let inputs = RegressionDataset::synthetic(s.samples, vars, (s.low, s.high), |_| 0.0, &mut rng)
                        .map_err(|e| loaded.field_error("domain.synthetic", e))?;
                    let y = evaluate(&expr, inputs.x())
                        .map_err(|e| loaded.field_error("domain.synthetic.expression", e))?;
                    RegressionDataset::new(inputs.x().clone(), y)
                        .map_err(|e| loaded.field_error("domain.synthetic", e))?
                }
                _ => {
                    return Err(loaded.field_error(
                        "domain",
                        "symreg needs exactly one of `dataset` or `synthetic`",
                    ))
                }
            };
            let data = if *test_fraction > 0.0 {
                data.split(*test_fraction, &mut RngStream::new(seed, "split"))
                    .map_err(|e| loaded.field_error("domain.test_fraction", e))?
            } else {
                data
            };
            let bench_text = match benchmarks {
                Some(p) => {
                    let p = loaded.resolve(p);
                    std::fs::read_to_string(&p).map_err(|e| {
                        loaded.field_error("domain.benchmarks", format!("cannot read {}: {e}", p.display()))
                    })?
                }
                None => BUNDLED_BENCHMARKS.to_string(),
            };
            let benches =
                parse_benchmarks(&bench_text).map_err(|e| loaded.field_error("domain.benchmarks", e))?;
            let domain =
                SymregDomain::new(&data, benches).map_err(|e| loaded.field_error("domain", e))?;
            Ok(BuiltDomain::Symreg(domain))
        }
    }
}

pub fn sampling(loaded: &LoadedConfig, domain: Option<&BuiltDomain>) -> Result<SamplingParams, CliError> {
    let params = match (&loaded.config.sampling, domain) {
        (Some(p), _) => p.clone(),
        (None, Some(d)) => d.default_sampling(),
        (None, None) => SamplingParams::default(),
    };
    params.validate().map_err(|e| loaded.field_error("sampling", e))?;
    Ok(params)
}

pub fn build_variation(
    loaded: &LoadedConfig,
    domain: &BuiltDomain,
    engine: Arc<dyn Engine>,
    max_children: usize,
) -> Result<Box<dyn Variation>, CliError> {
    match (loaded.config.variation, domain) {
        (VariationKind::Lmx, _) => {
            let template = loaded
                .config
                .template
                .clone()
                .unwrap_or_else(|| domain.default_template());
            template.validate().map_err(|e| loaded.field_error("template", e))?;
            let params = sampling(loaded, Some(domain))?;
            Ok(Box::new(Lmx::new(engine, template, domain.parser(max_children), params)))
        }
        (VariationKind::OnePointCrossover, BuiltDomain::Binary(_)) => Ok(Box::new(OnePointCrossover::default())),
        (VariationKind::SubtreeCrossover, BuiltDomain::Symreg(_)) => Ok(Box::new(SubtreeCrossover)),
        (kind, _) => Err(loaded.field_error(
            "variation",
            format!("{kind:?} does not apply to this domain"),
        )),
    }
}
