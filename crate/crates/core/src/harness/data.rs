use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use flate2::read::GzDecoder;
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::apsi::SampleId;
use crate::avlr::reference::JoinedRow;
use crate::avlr::VerticalDataset;
use crate::error::{Error, Result};
use crate::seeding;

/// How a raw label cell becomes a binary class.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LabelRule {
    /// The cell must already be 0 or 1.
    Binary,
    /// 1 when the value is at least the threshold.
    AtLeast(f64),
}

impl LabelRule {
    fn apply(self, value: f64) -> Option<u8> {
        match self {
            LabelRule::Binary if value == 0.0 => Some(0),
            LabelRule::Binary if value == 1.0 => Some(1),
            LabelRule::Binary => None,
            LabelRule::AtLeast(t) => Some(u8::from(value >= t)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FeatureColumns {
    /// Every column other than the id and label columns, in file order.
    Remaining,
    Named(Vec<String>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsvSchema {
    pub id_column: String,
    pub features: FeatureColumns,
    pub label_column: Option<String>,
    pub label_rule: LabelRule,
    /// Every feature is multiplied by this on load.
    pub feature_scale: f64,
}

impl CsvSchema {
    pub fn new(id_column: impl Into<String>) -> Self {
        Self {
            id_column: id_column.into(),
            features: FeatureColumns::Remaining,
            label_column: None,
            label_rule: LabelRule::Binary,
            feature_scale: 1.0,
        }
    }

    pub fn with_label(mut self, column: impl Into<String>, rule: LabelRule) -> Self {
        self.label_column = Some(column.into());
        self.label_rule = rule;
        self
    }

    pub fn with_feature_scale(mut self, scale: f64) -> Self {
        self.feature_scale = scale;
        self
    }

    /// The layout of the bundled MNIST subsample: `id,digit,px0..px783`,
    /// pixels scaled into [0, 1) and digits of 5 and up labelled 1.
    pub fn mnist() -> Self {
        Self::new("id")
            .with_label("digit", LabelRule::AtLeast(5.0))
            .with_feature_scale(1.0 / 256.0)
    }
}

/// Loads a headed CSV, gunzipping when the path ends in `.gz`.
pub fn ingest_csv(path: &Path, schema: &CsvSchema) -> Result<VerticalDataset> {
    let file = BufReader::new(File::open(path)?);
    let reader: Box<dyn Read> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(GzDecoder::new(file))
    } else {
        Box::new(file)
    };
    let data = ingest_reader(reader, schema)?;
    log::info!(
        "ingested {} rows x {} features from {}",
        data.len(),
        data.dim(),
        path.display()
    );
    Ok(data)
}

pub fn ingest_reader<R: Read>(reader: R, schema: &CsvSchema) -> Result<VerticalDataset> {
    if !(schema.feature_scale.is_finite() && schema.feature_scale != 0.0) {
        return Err(Error::InvalidParameter(
            "feature scale must be finite and nonzero".into(),
        ));
    }
    let mut csv = csv::Reader::from_reader(reader);
    let headers = csv.headers()?.clone();
    let position: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let find = |name: &str| {
        position
            .get(name)
            .copied()
            .ok_or_else(|| Error::Data(format!("no column named {name:?}")))
    };
    let id_col = find(&schema.id_column)?;
    let label_col = schema.label_column.as_deref().map(find).transpose()?;
    let feature_cols: Vec<usize> = match &schema.features {
        FeatureColumns::Remaining => (0..headers.len())
            .filter(|&i| i != id_col && Some(i) != label_col)
            .collect(),
        FeatureColumns::Named(names) => names.iter().map(|n| find(n)).collect::<Result<_>>()?,
    };
    if feature_cols.is_empty() {
        return Err(Error::Data("no feature columns selected".into()));
    }

    let mut data = VerticalDataset::new(feature_cols.len());
    let mut labels = Vec::new();
    for (line, record) in csv.records().enumerate() {
        let record = record?;
        let row = line + 2;
        let cell = |i: usize| -> Result<f64> {
            let raw = &record[i];
            raw.trim().parse::<f64>().map_err(|_| {
                Error::Data(format!(
                    "row {row}, column {:?}: {raw:?} is not a number",
                    &headers[i]
                ))
            })
        };
        let id = SampleId::from(&record[id_col]);
        let features = feature_cols
            .iter()
            .map(|&i| cell(i).map(|v| v * schema.feature_scale))
            .collect::<Result<Vec<f64>>>()?;
        data.insert(id.clone(), features)?;
        if let Some(i) = label_col {
            let label = schema.label_rule.apply(cell(i)?).ok_or_else(|| {
                Error::Data(format!("row {row}: label {:?} is not binary", &record[i]))
            })?;
            labels.push((id, label));
        }
    }
    for (id, label) in labels {
        data.set_label(&id, label)?;
    }
    Ok(data)
}

/// Splits a labelled dataset between the two parties. The strong party keeps
/// every row and the feature columns from `split` on. The weak party keeps
/// `round(n * weak_fraction)` rows chosen by `seed`, columns `0..split`, and
/// all the labels.
pub fn split_vertical(
    data: &VerticalDataset,
    split: usize,
    weak_fraction: f64,
    seed: u64,
) -> Result<(VerticalDataset, VerticalDataset)> {
    if split == 0 || split >= data.dim() {
        return Err(Error::InvalidParameter(format!(
            "split {split} must lie strictly inside 0..{}",
            data.dim()
        )));
    }
    if !(weak_fraction > 0.0 && weak_fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "weak fraction {weak_fraction} must lie in (0, 1]"
        )));
    }
    let ids: Vec<&SampleId> = data.ids().collect();
    let n_weak = ((ids.len() as f64 * weak_fraction).round() as usize).clamp(1, ids.len());
    let mut chosen: Vec<usize> = index::sample(
        &mut seeding::stream(seed, "harness/split"),
        ids.len(),
        n_weak,
    )
    .into_vec();
    chosen.sort_unstable();

    let mut strong = VerticalDataset::new(data.dim() - split);
    for id in &ids {
        strong.insert((*id).clone(), data.features(id)?[split..].to_vec())?;
    }
    let mut weak = VerticalDataset::new(split);
    for i in chosen {
        let id = ids[i];
        weak.insert(id.clone(), data.features(id)?[..split].to_vec())?;
        weak.set_label(id, data.label(id)?)?;
    }
    Ok((strong, weak))
}

/// Two Gaussian classes with equal priors. Class `y` has mean `+-0.5` in
/// every coordinate and unit variance. Ids are `syn-00000`, `syn-00001`, ...
pub fn synthetic_gaussian(rows: usize, dim: usize, seed: u64) -> Result<VerticalDataset> {
    if rows == 0 || dim == 0 {
        return Err(Error::InvalidParameter(
            "synthetic data needs rows and features".into(),
        ));
    }
    let mut rng = seeding::stream(seed, "harness/synthetic");
    let mut data = VerticalDataset::new(dim);
    for i in 0..rows {
        let id = SampleId::from(format!("syn-{i:05}"));
        let label: u8 = rng.gen_range(0..2);
        let shift = if label == 1 { 0.5 } else { -0.5 };
        let x = (0..dim)
            .map(|_| {
                shift + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
            })
            .collect();
        data.insert(id.clone(), x)?;
        data.set_label(&id, label)?;
    }
    Ok(data)
}

/// Rows of the true intersection, joined in id order, for the plaintext
/// reference trainer.
pub fn joined_intersection(
    strong: &VerticalDataset,
    weak: &VerticalDataset,
) -> Result<Vec<JoinedRow>> {
    weak.ids()
        .filter(|id| strong.contains(id))
        .map(|id| {
            Ok(JoinedRow {
                strong: strong.features(id)?.to_vec(),
                weak: weak.features(id)?.to_vec(),
                label: weak.label(id)?,
            })
        })
        .collect()
}
