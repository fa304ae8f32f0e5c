//! RSSI fingerprint datasets: CSV ingestion, imputation, synthetic
//! generation via a log-distance path-loss model, and train/test splitting.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridMap;
use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub const RSSI_MIN: f64 = -120.0;
pub const RSSI_MAX: f64 = 0.0;

/// N fingerprints of m RSSI readings (dBm) with per-sample cell labels.
#[derive(Clone, Debug, PartialEq)]
pub struct FingerprintDataset<S> {
    pub rssi: Matrix<S>,
    pub labels: Vec<String>,
    pub beacon_ids: Vec<String>,
    /// Row-major N×m; true marks an absent reading.
    pub missing_mask: Vec<bool>,
}

/// Parameters of the synthetic log-distance path-loss generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathLossParams {
    pub rssi_at_1m: f64,
    pub path_loss_exponent: f64,
    pub shadowing_sigma: f64,
    pub interference_burst_prob: f64,
    pub burst_offset: f64,
    pub seed: u64,
}

impl Default for PathLossParams {
    fn default() -> Self {
        PathLossParams {
            rssi_at_1m: -45.0,
            path_loss_exponent: 2.2,
            shadowing_sigma: 4.0,
            interference_burst_prob: 0.05,
            burst_offset: -10.0,
            seed: 42,
        }
    }
}

impl PathLossParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.path_loss_exponent > 0.0) {
            return Err(Error::Config("path_loss_exponent must be > 0".into()));
        }
        if self.shadowing_sigma < 0.0 {
            return Err(Error::Config("shadowing_sigma must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.interference_burst_prob) {
            return Err(Error::Config(
                "interference_burst_prob must be in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Repeated random-subsampling holdout plan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitPlan {
    pub train_fraction: f64,
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for SplitPlan {
    fn default() -> Self {
        SplitPlan {
            train_fraction: 0.7,
            repetitions: 8,
            seed: 42,
        }
    }
}

impl<S: Scalar> FingerprintDataset<S> {
    pub fn n_samples(&self) -> usize {
        self.rssi.rows()
    }

    pub fn n_beacons(&self) -> usize {
        self.rssi.cols()
    }

    /// Sorted distinct labels.
    pub fn distinct_labels(&self) -> Vec<String> {
        let mut v = self.labels.clone();
        v.sort();
        v.dedup();
        v
    }

    pub fn subset(&self, idx: &[usize]) -> FingerprintDataset<S> {
        let m = self.n_beacons();
        FingerprintDataset {
            rssi: self.rssi.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i].clone()).collect(),
            beacon_ids: self.beacon_ids.clone(),
            missing_mask: idx
                .iter()
                .flat_map(|&i| self.missing_mask[i * m..(i + 1) * m].iter().copied())
                .collect(),
        }
    }

    /// Replace every masked entry by `floor` and clear the mask.
    pub fn impute_missing(&self, floor: f64) -> Result<FingerprintDataset<S>> {
        if !(RSSI_MIN..=RSSI_MAX).contains(&floor) {
            return Err(Error::Config(format!(
                "imputation floor {floor} outside [{RSSI_MIN}, {RSSI_MAX}] dBm"
            )));
        }
        let mut out = self.clone();
        let m = out.n_beacons();
        for i in 0..out.n_samples() {
            for j in 0..m {
                if out.missing_mask[i * m + j] {
                    out.rssi.set(i, j, S::from_f64(floor));
                }
            }
        }
        out.missing_mask.iter_mut().for_each(|b| *b = false);
        Ok(out)
    }

    /// Load from CSV: header `b1,...,bm,label`, empty field = missing reading.
    pub fn load_csv(path: &Path, grid: &GridMap) -> Result<FingerprintDataset<S>> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_path(path)
            .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
        let header = reader
            .headers()
            .map_err(|e| Error::Data(format!("bad header: {e}")))?
            .clone();
        if header.len() < 2 {
            return Err(Error::Data("header must have at least one beacon column plus 'label'".into()));
        }
        let m = header.len() - 1;
        if &header[m] != "label" {
            return Err(Error::Data(format!(
                "last header column must be 'label', found '{}'",
                &header[m]
            )));
        }
        let beacon_ids: Vec<String> = header.iter().take(m).map(str::to_owned).collect();

        let mut values: Vec<S> = Vec::new();
        let mut mask: Vec<bool> = Vec::new();
        let mut labels: Vec<String> = Vec::new();
        for (row_idx, record) in reader.records().enumerate() {
            let row_no = row_idx + 1; // 1-based data row, matching the file minus header
            let record = record.map_err(|e| Error::Data(format!("row {row_no}: {e}")))?;
            if record.len() != m + 1 {
                return Err(Error::Data(format!(
                    "row {row_no}: expected {} fields, found {}",
                    m + 1,
                    record.len()
                )));
            }
            for field in record.iter().take(m) {
                if field.is_empty() {
                    values.push(S::zero());
                    mask.push(true);
                } else {
                    let v: f64 = field
                        .parse()
                        .map_err(|_| Error::Data(format!("row {row_no}: bad RSSI '{field}'")))?;
                    if !(RSSI_MIN..=RSSI_MAX).contains(&v) {
                        return Err(Error::Data(format!(
                            "row {row_no}: RSSI {v} outside [{RSSI_MIN}, {RSSI_MAX}] dBm"
                        )));
                    }
                    values.push(S::from_f64(v));
                    mask.push(false);
                }
            }
            let label = record[m].to_owned();
            if !grid.contains(&label) {
                return Err(Error::Data(format!(
                    "row {row_no}: label '{label}' not an active grid cell"
                )));
            }
            labels.push(label);
        }
        if labels.is_empty() {
            return Err(Error::Data("dataset has no data rows".into()));
        }
        Ok(FingerprintDataset {
            rssi: Matrix::from_vec(labels.len(), m, values),
            labels,
            beacon_ids,
            missing_mask: mask,
        })
    }

    /// Write as CSV. Finite values round-trip bit-exactly through `load_csv`.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "{},label", self.beacon_ids.join(","))?;
        let m = self.n_beacons();
        for i in 0..self.n_samples() {
            let mut line = String::new();
            for j in 0..m {
                if self.missing_mask[i * m + j] {
                    line.push(',');
                } else {
                    // Display of floats is the shortest round-trip form.
                    line.push_str(&format!("{},", self.rssi.get(i, j)));
                }
            }
            line.push_str(&self.labels[i]);
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Generate fingerprints for a trajectory of cells from a log-distance
/// path-loss model with log-normal shadowing and occasional interference
/// bursts. Deterministic for a fixed seed.
pub fn synthesize<S: Scalar>(
    grid: &GridMap,
    beacons: &[(f64, f64)],
    params: &PathLossParams,
    trajectory: &[String],
) -> Result<FingerprintDataset<S>> {
    params.validate()?;
    if beacons.is_empty() {
        return Err(Error::Config("need at least one beacon".into()));
    }
    if trajectory.is_empty() {
        return Err(Error::Config("trajectory is empty".into()));
    }
    for (i, b) in beacons.iter().enumerate() {
        if !grid.contains_point(*b) {
            eprintln!("warning: beacon {i} at ({}, {}) lies outside the map", b.0, b.1);
        }
    }
    let centers: Vec<(f64, f64)> = trajectory
        .iter()
        .map(|label| grid.cell_center(label))
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let m = beacons.len();
    let mut values = Vec::with_capacity(centers.len() * m);
    for &(cx, cy) in &centers {
        for &(bx, by) in beacons {
            let d = ((cx - bx).powi(2) + (cy - by).powi(2)).sqrt().max(0.1);
            let mut rssi =
                params.rssi_at_1m - 10.0 * params.path_loss_exponent * d.log10();
            // Always draw so the stream stays aligned across parameter choices.
            let z: f64 = rng.sample(StandardNormal);
            rssi += params.shadowing_sigma * z;
            let u: f64 = rng.gen();
            if u < params.interference_burst_prob {
                rssi += params.burst_offset;
            }
            values.push(S::from_f64(rssi.clamp(RSSI_MIN, RSSI_MAX)));
        }
    }
    Ok(FingerprintDataset {
        rssi: Matrix::from_vec(centers.len(), m, values),
        labels: trajectory.to_vec(),
        beacon_ids: (0..m).map(|j| format!("b{}", j + 1)).collect(),
        missing_mask: vec![false; centers.len() * m],
    })
}

/// Beacon lattice covering the map: the factorization cols×rows of `n` whose
/// spacings are closest to each other, beacons at cell-interior lattice points.
pub fn default_beacons(grid: &GridMap, n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let (w, h) = (grid.width(), grid.height());
    let mut best = (1usize, n);
    let mut best_gap = f64::INFINITY;
    for c in 1..=n {
        if n % c != 0 {
            continue;
        }
        let r = n / c;
        let gap = (w / c as f64 - h / r as f64).abs();
        if gap < best_gap {
            best_gap = gap;
            best = (c, r);
        }
    }
    let (cols, rows) = best;
    let mut out = Vec::with_capacity(n);
    for r in 0..rows {
        for c in 0..cols {
            out.push((
                (c as f64 + 0.5) * w / cols as f64,
                (r as f64 + 0.5) * h / rows as f64,
            ));
        }
    }
    out
}

/// Trajectory of `n_steps` dwelling in `n_cells` seeded-random distinct cells,
/// steps divided as evenly as possible. Exactly `n_cells` labels appear.
pub fn default_trajectory(
    grid: &GridMap,
    n_steps: usize,
    n_cells: usize,
    seed: u64,
) -> Result<Vec<String>> {
    if n_cells == 0 || n_steps < n_cells {
        return Err(Error::Config(
            "trajectory needs n_steps >= n_cells >= 1".into(),
        ));
    }
    if n_cells > grid.active_cells().len() {
        return Err(Error::Config(format!(
            "requested {n_cells} cells but grid has only {}",
            grid.active_cells().len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cells: Vec<String> = grid.active_cells().to_vec();
    cells.shuffle(&mut rng);
    cells.truncate(n_cells);
    let base = n_steps / n_cells;
    let extra = n_steps % n_cells;
    let mut out = Vec::with_capacity(n_steps);
    for (i, cell) in cells.iter().enumerate() {
        let reps = base + usize::from(i < extra);
        out.extend(std::iter::repeat(cell.clone()).take(reps));
    }
    Ok(out)
}

/// Disjoint train/test index partitions, one pair per repetition.
pub fn split(n: usize, plan: &SplitPlan) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if !(0.0..1.0).contains(&plan.train_fraction) || plan.train_fraction <= 0.0 {
        return Err(Error::Config("train_fraction must lie in (0, 1)".into()));
    }
    let n_train = (plan.train_fraction * n as f64).floor() as usize;
    if n_train < 1 || n_train >= n {
        return Err(Error::Data(format!(
            "cannot split {n} samples with train_fraction {}",
            plan.train_fraction
        )));
    }
    let mut out = Vec::with_capacity(plan.repetitions);
    for rep in 0..plan.repetitions {
        let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
        rng.set_stream(rep as u64 + 1);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let test = idx.split_off(n_train);
        out.push((idx, test));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tiny_grid() -> GridMap {
        GridMap::default_map()
    }

    fn write_csv(contents: &str) -> tempfile::NamedTempFile {
        let f = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(f.path(), contents).unwrap();
        f
    }

    #[test]
    fn load_csv_shapes() {
        let f = write_csv(
            "b1,b2,b3,b4,b5,b6,b7,b8,b9,b10,label\n\
             -50,-51,-52,-53,-54,-55,-56,-57,-58,-59,r0c0\n\
             -60,,-62,-63,-64,-65,-66,-67,-68,-69,r0c1\n\
             -70,-71,-72,-73,-74,-75,-76,-77,-78,-79,r1c0\n",
        );
        let ds = FingerprintDataset::<f64>::load_csv(f.path(), &tiny_grid()).unwrap();
        assert_eq!(ds.n_samples(), 3);
        assert_eq!(ds.n_beacons(), 10);
        assert!(ds.missing_mask[10 + 1]);
        assert_eq!(ds.distinct_labels().len(), 3);
    }

    #[test]
    fn load_csv_reports_short_row() {
        let f = write_csv(
            "b1,b2,b3,label\n-50,-51,-52,r0c0\n-60,-61,r0c1\n",
        );
        let err = FingerprintDataset::<f64>::load_csv(f.path(), &tiny_grid()).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
    }

    #[test]
    fn load_csv_rejects_unknown_label() {
        let f = write_csv("b1,label\n-50,r99c99\n");
        assert!(FingerprintDataset::<f64>::load_csv(f.path(), &tiny_grid()).is_err());
    }

    #[test]
    fn impute_cases() {
        let f = write_csv("b1,b2,label\n-50,,r0c0\n,,r0c1\n");
        let ds = FingerprintDataset::<f64>::load_csv(f.path(), &tiny_grid()).unwrap();
        let imputed = ds.impute_missing(-100.0).unwrap();
        assert_eq!(imputed.rssi.get(0, 0), -50.0);
        assert_eq!(imputed.rssi.get(0, 1), -100.0);
        assert_eq!(imputed.rssi.row(1), &[-100.0, -100.0]);
        assert!(imputed.missing_mask.iter().all(|&b| !b));
        // no missing entries: identity
        let again = imputed.impute_missing(-90.0).unwrap();
        assert_eq!(again, imputed);
    }

    #[test]
    fn csv_round_trip_bit_exact() {
        let grid = tiny_grid();
        let beacons = default_beacons(&grid, 10);
        let traj = default_trajectory(&grid, 60, 12, 7).unwrap();
        let ds: FingerprintDataset<f64> =
            synthesize(&grid, &beacons, &PathLossParams::default(), &traj).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        ds.save_csv(f.path()).unwrap();
        let back = FingerprintDataset::<f64>::load_csv(f.path(), &grid).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn synthesize_deterministic_model() {
        let grid = tiny_grid();
        let params = PathLossParams {
            rssi_at_1m: -45.0,
            path_loss_exponent: 2.0,
            shadowing_sigma: 0.0,
            interference_burst_prob: 0.0,
            burst_offset: 0.0,
            seed: 1,
        };
        // beacon 10 m right of the r0c0 center
        let center = grid.cell_center("r0c0").unwrap();
        let beacons = vec![(center.0 + 10.0, center.1), (center.0 + 1.0, center.1)];
        let ds: FingerprintDataset<f64> =
            synthesize(&grid, &beacons, &params, &["r0c0".to_string()]).unwrap();
        assert!((ds.rssi.get(0, 0) - -65.0).abs() < 1e-12);
        assert!((ds.rssi.get(0, 1) - -45.0).abs() < 1e-12);
    }

    #[test]
    fn synthesize_same_seed_identical() {
        let grid = tiny_grid();
        let beacons = default_beacons(&grid, 10);
        let traj = default_trajectory(&grid, 40, 8, 3).unwrap();
        let p = PathLossParams::default();
        let a: FingerprintDataset<f64> = synthesize(&grid, &beacons, &p, &traj).unwrap();
        let b: FingerprintDataset<f64> = synthesize(&grid, &beacons, &p, &traj).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn equidistant_cells_equal_rssi_noiseless() {
        let grid = tiny_grid();
        let params = PathLossParams {
            shadowing_sigma: 0.0,
            interference_burst_prob: 0.0,
            ..PathLossParams::default()
        };
        // beacon midway between the centers of r0c0 and r0c2
        let a = grid.cell_center("r0c0").unwrap();
        let b = grid.cell_center("r0c2").unwrap();
        let beacon = ((a.0 + b.0) / 2.0, a.1);
        let ds: FingerprintDataset<f64> = synthesize(
            &grid,
            &[beacon],
            &params,
            &["r0c0".to_string(), "r0c2".to_string()],
        )
        .unwrap();
        assert_eq!(ds.rssi.get(0, 0), ds.rssi.get(1, 0));
    }

    #[test]
    fn split_sizes_and_determinism() {
        let plan = SplitPlan {
            train_fraction: 0.7,
            repetitions: 8,
            seed: 5,
        };
        let parts = split(10, &plan).unwrap();
        assert_eq!(parts.len(), 8);
        assert_eq!(parts[0].0.len(), 7);
        assert_eq!(parts[0].1.len(), 3);
        assert_eq!(split(10, &plan).unwrap(), parts);
        // repetitions differ
        assert_ne!(parts[0], parts[1]);
    }

    #[test]
    fn split_too_small_is_error() {
        let plan = SplitPlan {
            train_fraction: 0.5,
            repetitions: 1,
            seed: 0,
        };
        assert!(split(1, &plan).is_err());
    }

    proptest! {
        #[test]
        fn split_partitions_cover(n in 3usize..60, seed in 0u64..1000) {
            let plan = SplitPlan { train_fraction: 0.7, repetitions: 3, seed };
            for (train, test) in split(n, &plan).unwrap() {
                let mut all: Vec<usize> = train.iter().chain(test.iter()).copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            }
        }
    }
}
