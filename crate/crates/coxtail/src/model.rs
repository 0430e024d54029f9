//! Serializable fitted-model container shared by the CLI and bindings.

use serde::{Deserialize, Serialize};

use crate::aggregate::AggregateModel;
use crate::cox::CoxFit;
use crate::error::{Error, Result};
use crate::tail::SemiParamModel;

/// Any of the fitted baselines, with a uniform evaluation surface.
///
/// `quantile` returns `None` when the curve never reaches the level, which
/// happens for the flat Nelson-Aalen step curve; callers render that as
/// `NA`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FittedModel {
    NelsonAalen { cox: CoxFit },
    SemiParametric { model: SemiParamModel },
    Aggregate { model: AggregateModel },
}

impl FittedModel {
    pub fn beta(&self) -> &[f64] {
        match self {
            FittedModel::NelsonAalen { cox } => &cox.beta,
            FittedModel::SemiParametric { model } => &model.cox.beta,
            FittedModel::Aggregate { model } => &model.cox.beta,
        }
    }

    pub fn survival(&self, z: &[f64], x: f64) -> f64 {
        match self {
            FittedModel::NelsonAalen { cox } => cox.survival_at(z, x),
            FittedModel::SemiParametric { model } => model.survival(z, x),
            FittedModel::Aggregate { model } => model.survival(z, x),
        }
    }

    pub fn cum_hazard(&self, z: &[f64], x: f64) -> f64 {
        match self {
            FittedModel::NelsonAalen { cox } => cox.cum_hazard_at(z, x),
            FittedModel::SemiParametric { model } => model.cum_hazard(z, x),
            FittedModel::Aggregate { model } => model.cum_hazard(z, x),
        }
    }

    pub fn quantile(&self, z: &[f64], p: f64) -> Result<Option<f64>> {
        match self {
            FittedModel::NelsonAalen { cox } => cox.quantile_at(z, p),
            FittedModel::SemiParametric { model } => model.quantile(z, p).map(Some),
            FittedModel::Aggregate { model } => model.quantile(z, p).map(Some),
        }
    }

    pub fn check_covariates(&self, z: &[f64]) -> Result<()> {
        let p = self.beta().len();
        if z.len() != p {
            return Err(Error::domain(format!(
                "covariate vector has length {}, the model expects {p}",
                z.len()
            )));
        }
        Ok(())
    }
}

/// On-disk model file: the fitted model plus its embedded run manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub manifest: serde_json::Value,
    pub model: FittedModel,
}

impl ModelFile {
    pub fn read(path: &std::path::Path) -> Result<Self> {
        Ok(serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?)
    }

    pub fn write(&self, path: &std::path::Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }
}

/// Write a curve CSV `x,survival,cum_hazard` over a grid for a covariate
/// vector.
pub fn write_curve_csv<W: std::io::Write>(
    model: &FittedModel,
    z: &[f64],
    grid: &[f64],
    writer: W,
) -> Result<()> {
    model.check_covariates(z)?;
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["x", "survival", "cum_hazard"])
        .map_err(|e| Error::domain(format!("csv write failed: {e}")))?;
    for &x in grid {
        wtr.write_record([
            format!("{x}"),
            format!("{}", model.survival(z, x)),
            format!("{}", model.cum_hazard(z, x)),
        ])
        .map_err(|e| Error::domain(format!("csv write failed: {e}")))?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::load_dataset;

    fn fixture() -> crate::data::SurvivalSample {
        load_dataset(
            "time,status,z1\n0.5,1,0\n1.5,1,0.5\n3.0,0,-0.5\n4.0,1,0.2\n9.0,1,0\n".as_bytes(),
        )
        .unwrap()
    }

    #[test]
    fn json_roundtrip_all_variants() {
        let s = fixture();
        let cox = crate::cox::breslow_baseline(&s, &[0.3]).unwrap();
        let semi = SemiParamModel::fit_fixed(&s, &[0.3], 4.0).unwrap();
        let agg = crate::aggregate::aggregate_simple(&s, &[0.3], 2, 2).unwrap();
        for model in [
            FittedModel::NelsonAalen { cox },
            FittedModel::SemiParametric { model: semi },
            FittedModel::Aggregate { model: agg },
        ] {
            let text = serde_json::to_string(&model).unwrap();
            let back: FittedModel = serde_json::from_str(&text).unwrap();
            for x in [0.4, 2.0, 8.0, 30.0] {
                assert_eq!(model.survival(&[0.1], x), back.survival(&[0.1], x));
                assert_eq!(model.cum_hazard(&[0.1], x), back.cum_hazard(&[0.1], x));
            }
        }
    }

    #[test]
    fn nelson_aalen_quantile_can_be_unreachable() {
        let s = fixture();
        let cox = crate::cox::breslow_baseline(&s, &[0.0]).unwrap();
        let min_survival = cox.baseline_survival(9.0);
        let model = FittedModel::NelsonAalen { cox };
        assert_eq!(model.quantile(&[0.0], min_survival * 0.5).unwrap(), None);
        assert!(model.quantile(&[0.0], min_survival * 1.5).unwrap().is_some());
    }

    #[test]
    fn semiparam_quantile_always_reachable() {
        let s = fixture();
        let semi = SemiParamModel::fit_fixed(&s, &[0.0], 4.0).unwrap();
        let model = FittedModel::SemiParametric { model: semi };
        assert!(model.quantile(&[0.0], 1e-6).unwrap().is_some());
    }

    #[test]
    fn curve_csv_shape() {
        let s = fixture();
        let cox = crate::cox::breslow_baseline(&s, &[0.3]).unwrap();
        let model = FittedModel::NelsonAalen { cox };
        let mut buf = Vec::new();
        write_curve_csv(&model, &[0.0], &[1.0, 2.0, 3.0], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("x,survival,cum_hazard"));
        assert!(write_curve_csv(&model, &[0.0, 1.0], &[1.0], &mut Vec::new()).is_err());
    }
}
