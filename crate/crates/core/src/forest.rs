//! Random-forest surrogate with an empirical normal predictive distribution.
//!
//! The forest mean is the average of the per-tree predictions and the spread
//! is their population standard deviation (divisor = number of trees).

use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::rng::{self, Rng};
use crate::space::UnitVector;

/// Magic first line of a serialized forest.
pub const FOREST_MAGIC: &str = "ABMCALIB-RF v1";

/// Inputs in unit-cube coordinates paired with finite targets.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    dim: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
}

impl TrainingSet {
    pub fn new(inputs: &[UnitVector], targets: &[f64]) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::invalid("training set is empty"));
        }
        if inputs.len() != targets.len() {
            return Err(Error::invalid(format!(
                "{} inputs but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        let dim = inputs[0].len();
        if dim == 0 {
            return Err(Error::invalid("training inputs have dimension 0"));
        }
        let mut flat = Vec::with_capacity(dim * inputs.len());
        for x in inputs {
            if x.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: x.len(),
                });
            }
            flat.extend_from_slice(x.as_slice());
        }
        if let Some(t) = targets.iter().find(|t| !t.is_finite()) {
            return Err(Error::invalid(format!("non-finite training target {t}")));
        }
        Ok(TrainingSet {
            dim,
            inputs: flat,
            targets: targets.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    #[inline]
    fn x(&self, row: usize, col: usize) -> f64 {
        self.inputs[row * self.dim + col]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        dim: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        value: f64,
    },
}

/// Binary regression tree stored as a flat node arena; node 0 is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
    seed: u64,
}

impl RegressionTree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + walk(nodes, left as usize).max(walk(nodes, right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    /// Samples with `x[dim] <= threshold` go left.
    #[inline]
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    dim,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[dim as usize] <= threshold {
                        left as usize
                    } else {
                        right as usize
                    };
                }
            }
        }
    }

    fn leaf_range(&self) -> (f64, f64) {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Leaf { value } => Some(*value),
                _ => None,
            })
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
    }
}

struct SplitCandidate {
    dim: usize,
    threshold: f64,
    score: f64,
}

struct Grower<'a> {
    data: &'a TrainingSet,
    feature_budget: usize,
    min_leaf: usize,
    rng: Rng,
    nodes: Vec<Node>,
    order: Vec<usize>,
}

impl Grower<'_> {
    fn grow(&mut self, rows: &mut [usize]) -> u32 {
        let id = self.nodes.len() as u32;
        let n = rows.len();
        let sum: f64 = rows.iter().map(|&r| self.data.targets[r]).sum();
        let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
            let y = self.data.targets[r];
            (lo.min(y), hi.max(y))
        });
        // Rounding in the sum can push the mean a hair outside the observed
        // range, and a constant leaf should reproduce its value exactly.
        let mean = if lo == hi { lo } else { (sum / n as f64).clamp(lo, hi) };
        self.nodes.push(Node::Leaf { value: mean });

        if n <= self.min_leaf || n < 2 * self.min_leaf {
            return id;
        }
        let sum_sq: f64 = rows
            .iter()
            .map(|&r| (self.data.targets[r] - mean).powi(2))
            .sum();
        if lo == hi || sum_sq <= 0.0 {
            return id;
        }
        let Some(best) = self.best_split(rows, sum) else {
            return id;
        };
        // Children SSE = sum_y2 - score; the parent SSE is sum_y2 - sum^2/n.
        let gain = best.score - sum * sum / n as f64;
        if !(gain > 1e-12 * sum_sq.max(f64::MIN_POSITIVE)) {
            return id;
        }

        let mut split_at = 0;
        for i in 0..n {
            if self.data.x(rows[i], best.dim) <= best.threshold {
                rows.swap(i, split_at);
                split_at += 1;
            }
        }
        let (left_rows, right_rows) = rows.split_at_mut(split_at);
        let left = self.grow(left_rows);
        let right = self.grow(right_rows);
        self.nodes[id as usize] = Node::Split {
            dim: best.dim as u32,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    /// Scores splits by `S_L^2/n_L + S_R^2/n_R`, which is maximal exactly
    /// where the children's total squared error is minimal.
    fn best_split(&mut self, rows: &[usize], total: f64) -> Option<SplitCandidate> {
        let d = self.data.dim;
        let mut features = sample(&mut self.rng, d, self.feature_budget).into_vec();
        features.sort_unstable();

        let n = rows.len();
        let mut best: Option<SplitCandidate> = None;
        for &f in &features {
            self.order.clear();
            self.order.extend_from_slice(rows);
            let data = self.data;
            self.order
                .sort_by(|&a, &b| data.x(a, f).total_cmp(&data.x(b, f)));

            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                left_sum += data.targets[self.order[k]];
                let n_left = k + 1;
                let n_right = n - n_left;
                if n_left < self.min_leaf || n_right < self.min_leaf {
                    continue;
                }
                let lo = data.x(self.order[k], f);
                let hi = data.x(self.order[k + 1], f);
                if lo == hi {
                    continue;
                }
                let right_sum = total - left_sum;
                let score =
                    left_sum * left_sum / n_left as f64 + right_sum * right_sum / n_right as f64;
                let better = match &best {
                    None => true,
                    Some(b) => score > b.score,
                };
                if better {
                    let mut threshold = 0.5 * (lo + hi);
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(SplitCandidate {
                        dim: f,
                        threshold,
                        score,
                    });
                }
            }
        }
        best
    }
}

fn grow_tree(
    data: &TrainingSet,
    rows: &mut [usize],
    feature_budget: usize,
    min_leaf: usize,
    rng: Rng,
    seed: u64,
) -> RegressionTree {
    let mut grower = Grower {
        data,
        feature_budget,
        min_leaf: min_leaf.max(1),
        rng,
        nodes: Vec::new(),
        order: Vec::with_capacity(rows.len()),
    };
    grower.grow(rows);
    RegressionTree {
        nodes: grower.nodes,
        seed,
    }
}

fn check_budget(data: &TrainingSet, feature_budget: usize) -> Result<()> {
    if feature_budget == 0 || feature_budget > data.dim() {
        return Err(Error::invalid(format!(
            "feature budget {feature_budget} outside 1..={}",
            data.dim()
        )));
    }
    Ok(())
}

/// Greedy CART regression tree over all rows of `data`.
pub fn fit_tree(
    data: &TrainingSet,
    feature_budget: usize,
    min_leaf: usize,
    seed: u64,
) -> Result<RegressionTree> {
    check_budget(data, feature_budget)?;
    let mut rows: Vec<usize> = (0..data.len()).collect();
    Ok(grow_tree(
        data,
        &mut rows,
        feature_budget,
        min_leaf,
        rng::rng_from(seed),
        seed,
    ))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub min_samples_leaf: usize,
    /// Candidate dimensions per node; `None` means `ceil(d / 3)`.
    pub max_features: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 1000,
            min_samples_leaf: 1,
            max_features: None,
        }
    }
}

impl ForestParams {
    pub fn feature_budget(&self, d: usize) -> usize {
        self.max_features.unwrap_or_else(|| d.div_ceil(3)).clamp(1, d.max(1))
    }
}

/// Predictive mean and standard deviation at one query point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurrogatePrediction {
    pub mean: f64,
    pub std: f64,
}

impl SurrogatePrediction {
    /// Aggregates per-tree outputs: arithmetic mean and population standard
    /// deviation. Exactly zero spread when all members agree.
    pub fn from_members(outputs: &[f64]) -> Self {
        let first = outputs[0];
        if outputs.iter().all(|v| v.to_bits() == first.to_bits()) {
            return SurrogatePrediction {
                mean: first,
                std: 0.0,
            };
        }
        let c = outputs.len() as f64;
        let (lo, hi) = outputs
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let mean = (outputs.iter().sum::<f64>() / c).clamp(lo, hi);
        let var = outputs.iter().map(|v| (mean - v).powi(2)).sum::<f64>() / c;
        SurrogatePrediction {
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    dim: usize,
    params: ForestParams,
    master_seed: u64,
    trees: Vec<RegressionTree>,
}

impl RandomForest {
    pub fn fit(data: &TrainingSet, params: &ForestParams, master_seed: u64) -> Result<Self> {
        Self::fit_with(data, params, master_seed, Execution::default())
    }

    /// Tree `i` sees a bootstrap resample drawn from the stream
    /// `(master_seed, i)`, so the result does not depend on `exec`.
    pub fn fit_with(
        data: &TrainingSet,
        params: &ForestParams,
        master_seed: u64,
        exec: Execution,
    ) -> Result<Self> {
        if params.n_trees == 0 {
            return Err(Error::invalid("forest needs at least one tree"));
        }
        if data.is_empty() {
            return Err(Error::invalid("training set is empty"));
        }
        let budget = params.feature_budget(data.dim());
        check_budget(data, budget)?;
        let n = data.len();
        let trees = exec.map_indexed(params.n_trees, |i| {
            let seed = rng::derive_seed(master_seed, i as u64);
            let mut rng = rng::rng_from(seed);
            let mut rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            grow_tree(data, &mut rows, budget, params.min_samples_leaf, rng, seed)
        });
        Ok(RandomForest {
            dim: data.dim(),
            params: params.clone(),
            master_seed,
            trees,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn member_predictions(&self, x: &UnitVector) -> Result<Vec<f64>> {
        self.check(x.as_slice())?;
        Ok(self.members_unchecked(x.as_slice()))
    }

    fn members_unchecked(&self, x: &[f64]) -> Vec<f64> {
        self.trees.iter().map(|t| t.predict(x)).collect()
    }

    pub fn predict(&self, x: &UnitVector) -> Result<SurrogatePrediction> {
        self.check(x.as_slice())?;
        Ok(self.predict_raw(x.as_slice()))
    }

    /// Prediction without the dimension check, for hot loops that already
    /// validated their input.
    pub fn predict_raw(&self, x: &[f64]) -> SurrogatePrediction {
        SurrogatePrediction::from_members(&self.members_unchecked(x))
    }

    /// Same as [`RandomForest::predict_raw`] but reuses `buf` for the
    /// per-tree outputs.
    pub fn predict_with_buffer(&self, x: &[f64], buf: &mut Vec<f64>) -> SurrogatePrediction {
        buf.clear();
        buf.extend(self.trees.iter().map(|t| t.predict(x)));
        SurrogatePrediction::from_members(buf)
    }

    /// Smallest and largest leaf value across the ensemble.
    pub fn leaf_range(&self) -> (f64, f64) {
        self.trees
            .iter()
            .map(RegressionTree::leaf_range)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, b)| {
                (lo.min(a), hi.max(b))
            })
    }

    /// Writes the magic header line followed by a JSON body.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{FOREST_MAGIC}").map_err(|e| Error::io("<forest>", e))?;
        serde_json::to_writer(&mut w, self)?;
        writeln!(w).map_err(|e| Error::io("<forest>", e))?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(mut r: R) -> Result<Self> {
        let mut header = String::new();
        r.read_line(&mut header)
            .map_err(|e| Error::io("<forest>", e))?;
        if header.trim_end() != FOREST_MAGIC {
            return Err(Error::parse(
                "forest",
                1,
                format!("expected header {FOREST_MAGIC:?}, found {:?}", header.trim_end()),
            ));
        }
        let forest: RandomForest = serde_json::from_reader(r)?;
        if forest.trees.is_empty() {
            return Err(Error::parse("forest", 2, "forest has no trees"));
        }
        Ok(forest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file))
    }
}
