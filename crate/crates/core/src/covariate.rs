//! Controlled covariate-shift splits built from two source datasets, and the
//! class-mean difference image used to inspect them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dataset::{Dataset, Lineage, RowSource, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::image::{Grid, RawImage};
use crate::rng::{stable_hash, SeededRng};
use crate::table::{columns, LabelMatrix, MetaTable};
use crate::taxonomy::{Pathology, Taxonomy, TriState};
use crate::transforms::TransformChain;

pub const COVARIATE_NAME: &str = "CovariateDataset";
pub const TARGET_NAME: &str = "target";

/// Which labels of a source define the binary target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Pathology(String),
    /// One entry per row; `None` rows are excluded.
    Vector(Vec<Option<bool>>),
}

impl Target {
    /// The target of every row of `ds`, `None` where unknown.
    pub fn resolve(&self, ds: &Dataset) -> Result<Vec<Option<bool>>> {
        match self {
            Target::Pathology(name) => {
                let j = ds.pathologies().index_of_name(name).ok_or_else(|| {
                    Error::InvalidArgument(format!("{} has no pathology `{name}`", ds.name()))
                })?;
                Ok(ds.labels().column(j).into_iter().map(TriState::as_bool).collect())
            }
            Target::Vector(v) => {
                if v.len() != ds.len() {
                    return Err(Error::LengthMismatch { left: v.len(), right: ds.len() });
                }
                Ok(v.clone())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Valid,
    Test,
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Mode::Train),
            "valid" => Ok(Mode::Valid),
            "test" => Ok(Mode::Test),
            _ => Err(Error::InvalidArgument(format!("mode must be train, valid or test, got `{s}`"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Train => "train",
            Mode::Valid => "valid",
            Mode::Test => "test",
        })
    }
}

pub const DEFAULT_POOL_FRACTIONS: [f64; 3] = [0.7, 0.1, 0.2];

/// Everything but the source datasets; serializes as the provenance record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateParams {
    pub d1_target: Target,
    pub d2_target: Target,
    pub mode: Mode,
    pub ratio: f64,
    pub seed: u64,
    pub pool_fractions: [f64; 3],
}

impl CovariateParams {
    pub fn new(target: &str, mode: Mode, ratio: f64, seed: u64) -> Self {
        CovariateParams {
            d1_target: Target::Pathology(target.to_string()),
            d2_target: Target::Pathology(target.to_string()),
            mode,
            ratio,
            seed,
            pool_fractions: DEFAULT_POOL_FRACTIONS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(Error::InvalidArgument(format!("ratio must be in (0,1), got {}", self.ratio)));
        }
        validate_fractions(self.pool_fractions)
    }

    /// Share of the mode's negatives drawn from d1.
    pub fn effective_ratio(&self) -> f64 {
        match self.mode {
            Mode::Train => self.ratio,
            Mode::Valid | Mode::Test => 1.0 - self.ratio,
        }
    }
}

fn validate_fractions(f: [f64; 3]) -> Result<()> {
    if f.iter().any(|x| !(0.0..=1.0).contains(x)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "pool fractions must be non-negative and sum to 1, got {f:?}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct CovariateSpec {
    pub d1: Dataset,
    pub d2: Dataset,
    pub params: CovariateParams,
}

/// Row indices of the train, valid and test pools.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Pools {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl Pools {
    pub fn get(&self, mode: Mode) -> &[usize] {
        match mode {
            Mode::Train => &self.train,
            Mode::Valid => &self.valid,
            Mode::Test => &self.test,
        }
    }
}

/// Hash key grouping a row with the other images of its patient.
pub fn pool_key(ds: &Dataset, i: usize) -> String {
    match ds.csv().get(i, columns::PATIENT_ID) {
        Some(pid) => pid.to_string(),
        None => format!("idx:{i}"),
    }
}

/// Pool (0 train, 1 valid, 2 test) a hash key falls into.
pub fn pool_of(key: &str, seed: u64, fractions: [f64; 3]) -> usize {
    let bucket = stable_hash(key, seed) % 100;
    let t1 = (fractions[0] * 100.0).round() as u64;
    let t2 = ((fractions[0] + fractions[1]) * 100.0).round() as u64;
    if bucket < t1 {
        0
    } else if bucket < t2 {
        1
    } else {
        2
    }
}

/// Split the rows with a known target into patient-disjoint pools.
pub fn partition_pools(
    ds: &Dataset,
    target: &[Option<bool>],
    seed: u64,
    fractions: [f64; 3],
) -> Result<Pools> {
    validate_fractions(fractions)?;
    if target.len() != ds.len() {
        return Err(Error::LengthMismatch { left: target.len(), right: ds.len() });
    }
    let mut pools = Pools::default();
    for (i, t) in target.iter().enumerate() {
        if t.is_none() {
            continue;
        }
        match pool_of(&pool_key(ds, i), seed, fractions) {
            0 => pools.train.push(i),
            1 => pools.valid.push(i),
            _ => pools.test.push(i),
        }
    }
    Ok(pools)
}

/// How many positives and negatives come from each source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DrawCounts {
    pub n: usize,
    pub pos_d1: usize,
    pub pos_d2: usize,
    pub neg_d1: usize,
    pub neg_d2: usize,
}

impl DrawCounts {
    pub fn new(n: usize, rho: f64) -> Self {
        // f64::round rounds half away from zero
        let pos_d1 = (((1.0 - rho) * n as f64).round() as usize).min(n);
        let neg_d1 = ((rho * n as f64).round() as usize).min(n);
        DrawCounts { n, pos_d1, pos_d2: n - pos_d1, neg_d1, neg_d2: n - neg_d1 }
    }
}

/// A balanced split with a single `Target` pathology.
#[derive(Debug, Clone)]
pub struct CovariateSplit {
    pub dataset: Dataset,
    pub counts: DrawCounts,
    /// `(source, row)` of each member, source 0 for d1 and 1 for d2.
    pub members: Vec<(usize, usize)>,
}

impl CovariateSplit {
    /// Manifest CSV: `source_name,source_index,target`.
    pub fn manifest_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::InvalidArgument(format!("manifest encode: {e}"));
        w.write_record([columns::SOURCE_NAME, columns::SOURCE_INDEX, TARGET_NAME]).map_err(err)?;
        for i in 0..self.dataset.len() {
            let o = self.dataset.origin(i).expect("row in range");
            w.write_record([
                o.source_name.to_string(),
                o.source_index.to_string(),
                self.dataset.labels().get(i, 0).as_csv().to_string(),
            ])
            .map_err(err)?;
        }
        w.into_inner().map_err(|e| Error::InvalidArgument(format!("manifest encode: {e}")))
    }
}

/// Build a split in which dataset identity correlates with the label.
///
/// With effective ratio ρ (`r` for train, `1 − r` otherwise) and
/// `n = min(P1, N1, P2, N2)` over the mode's pools, `round((1−ρ)n)`
/// positives and `round(ρn)` negatives come from d1, the rest from d2. The
/// size is `2n` whatever the ratio.
pub fn build_covariate(spec: &CovariateSpec) -> Result<CovariateSplit> {
    let p = &spec.params;
    p.validate()?;
    let sources = [&spec.d1, &spec.d2];
    let targets = [p.d1_target.resolve(&spec.d1)?, p.d2_target.resolve(&spec.d2)?];
    let mut pos: [Vec<usize>; 2] = Default::default();
    let mut neg: [Vec<usize>; 2] = Default::default();
    for k in 0..2 {
        let pools = partition_pools(sources[k], &targets[k], p.seed, p.pool_fractions)?;
        for &i in pools.get(p.mode) {
            if targets[k][i] == Some(true) {
                pos[k].push(i);
            } else {
                neg[k].push(i);
            }
        }
    }
    let sizes = [pos[0].len(), neg[0].len(), pos[1].len(), neg[1].len()];
    if sizes.contains(&0) {
        return Err(Error::InfeasiblePool(format!(
            "{} pool has P1={} N1={} P2={} N2={}",
            p.mode, sizes[0], sizes[1], sizes[2], sizes[3]
        )));
    }
    let n = *sizes.iter().min().unwrap();
    let counts = DrawCounts::new(n, p.effective_ratio());

    let mut rng = SeededRng::new(p.seed);
    let mut members: Vec<(usize, usize, bool)> = Vec::with_capacity(2 * n);
    let draws = [
        (0, &pos[0], counts.pos_d1, true),
        (1, &pos[1], counts.pos_d2, true),
        (0, &neg[0], counts.neg_d1, false),
        (1, &neg[1], counts.neg_d2, false),
    ];
    for (k, pool, count, label) in draws {
        members.extend(rng.sample(pool, count).into_iter().map(|i| (k, i, label)));
    }
    rng.shuffle(&mut members);

    let rows: Vec<RowSource> = members.iter().map(|&(k, i, _)| sources[k].rows[i].clone()).collect();
    let carried = [columns::PATIENT_ID, columns::VIEW, columns::OFFSET_DAY, columns::HAS_MASKS];
    let mut csv = MetaTable::with_rows(members.len());
    for c in carried {
        if sources.iter().any(|s| s.csv().has_column(c)) {
            csv.set_column(
                c,
                members.iter().map(|&(k, i, _)| sources[k].csv().get(i, c).map(str::to_string)).collect(),
            )?;
        }
    }
    crate::composition::set_origin_columns(&mut csv, &rows)?;
    let labels = LabelMatrix::from_rows(1, members.iter().map(|m| vec![TriState::from_bool(m.2)]).collect())?;
    let dataset = Dataset {
        name: COVARIATE_NAME.to_string(),
        pathologies: Taxonomy::new(vec![Pathology::new(TARGET_NAME)?])?,
        labels,
        csv,
        rows,
        lineage: Lineage::Source,
        mask_source: false,
        masks_enabled: false,
    };
    Ok(CovariateSplit { dataset, counts, members: members.iter().map(|&(k, i, _)| (k, i)).collect() })
}

/// Mean preprocessed positive image minus mean negative image for `target`.
pub fn class_mean_difference(ds: &Dataset, target: &Pathology, res: usize) -> Result<Grid> {
    let j = ds
        .pathologies()
        .index_of(target)
        .ok_or_else(|| Error::InvalidArgument(format!("{} has no pathology `{target}`", ds.name())))?;
    let chain = TransformChain::crop_resize(res)?;
    let mut sums = [vec![0.0; res * res], vec![0.0; res * res]];
    let mut counts = [0usize; 2];
    for i in 0..ds.len() {
        let Some(present) = ds.labels().get(i, j).as_bool() else {
            continue;
        };
        let k = present as usize;
        let sample = ds.get_sample(i, Some(&chain), None)?;
        for (s, v) in sums[k].iter_mut().zip(sample.img.data()) {
            *s += v;
        }
        counts[k] += 1;
    }
    if counts[1] == 0 {
        return Err(Error::EmptyClass(format!("no `{target}` positives in {}", ds.name())));
    }
    if counts[0] == 0 {
        return Err(Error::EmptyClass(format!("no `{target}` negatives in {}", ds.name())));
    }
    let data =
        sums[1].iter().zip(&sums[0]).map(|(p, n)| p / counts[1] as f64 - n / counts[0] as f64).collect();
    Grid::new(res, res, data)
}

/// A difference grid mapped onto the full 16-bit range.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceImage {
    pub image: RawImage,
    pub min: f64,
    pub max: f64,
}

impl DifferenceImage {
    /// Affine map with `min → 0` and `max → 65535`; a constant grid maps to 0.
    pub fn from_grid(grid: &Grid) -> Result<Self> {
        let (min, max) = (grid.min(), grid.max());
        let span = max - min;
        let pixels = grid
            .data()
            .iter()
            .map(|&v| if span > 0.0 { ((v - min) / span * 65535.0).round() as u16 } else { 0 })
            .collect();
        Ok(DifferenceImage { image: RawImage::new(grid.cols(), grid.rows(), 16, pixels)?, min, max })
    }

    /// Value represented by stored pixel `p`.
    pub fn value_of(&self, p: u16) -> f64 {
        self.min + p as f64 / 65535.0 * (self.max - self.min)
    }

    pub fn sidecar(&self) -> Value {
        json!({
            "format_version": FORMAT_VERSION,
            "bit_depth": 16,
            "min": self.min,
            "max": self.max,
            "mapping": "value = min + pixel / 65535 * (max - min)",
        })
    }
}
