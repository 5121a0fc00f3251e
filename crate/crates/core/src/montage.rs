//! Electrode geometry and the k-nearest-neighbor interpolation matrix.

use std::collections::HashSet;
use std::fmt::Write as _;

use ndarray::Array2;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Positions closer than this (in mm) are treated as the same electrode.
pub const MIN_ELECTRODE_SEPARATION_MM: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Electrode {
    pub label: String,
    /// Cartesian position in millimeters.
    pub position: [f64; 3],
}

impl Electrode {
    pub fn new(label: impl Into<String>, position: [f64; 3]) -> Self {
        Self {
            label: label.into(),
            position,
        }
    }
}

/// Ordered, validated set of labeled electrode positions.
#[derive(Debug, Clone, PartialEq)]
pub struct ElectrodeMontage {
    channels: Vec<Electrode>,
}

/// One entry of a nearest-neighbor query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    /// Euclidean distance in mm.
    pub distance: f64,
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

impl ElectrodeMontage {
    pub fn new(channels: Vec<Electrode>) -> Result<Self> {
        if channels.len() < 2 {
            return Err(Error::TooFewChannels(channels.len()));
        }
        let mut seen = HashSet::with_capacity(channels.len());
        for e in &channels {
            if !seen.insert(e.label.as_str()) {
                return Err(Error::DuplicateLabel(e.label.clone()));
            }
            if e.position.iter().any(|c| !c.is_finite()) {
                return Err(Error::NonFiniteCoordinate(e.label.clone()));
            }
        }
        for (i, a) in channels.iter().enumerate() {
            for b in &channels[i + 1..] {
                if distance(&a.position, &b.position) < MIN_ELECTRODE_SEPARATION_MM {
                    return Err(Error::CoincidentElectrodes(a.label.clone(), b.label.clone()));
                }
            }
        }
        Ok(Self { channels })
    }

    /// Parse the montage text format: one `label x y z` line per electrode
    /// (millimeters, whitespace separated); `#` starts a comment.
    pub fn parse(source: &str) -> Result<Self> {
        let mut channels = Vec::new();
        for (lineno, raw) in source.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: format!("expected `label x y z`, found {} fields", fields.len()),
                });
            }
            let mut position = [0.0; 3];
            for (slot, field) in position.iter_mut().zip(&fields[1..]) {
                *slot = field.parse().map_err(|_| Error::Parse {
                    line: lineno + 1,
                    message: format!("invalid coordinate `{field}`"),
                })?;
            }
            channels.push(Electrode::new(fields[0], position));
        }
        Self::new(channels)
    }

    /// Render in the text format accepted by [`ElectrodeMontage::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::from("# label x_mm y_mm z_mm\n");
        for e in &self.channels {
            let [x, y, z] = e.position;
            let _ = writeln!(out, "{} {x:?} {y:?} {z:?}", e.label);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn channels(&self) -> &[Electrode] {
        &self.channels
    }

    pub fn labels(&self) -> Vec<String> {
        self.channels.iter().map(|e| e.label.clone()).collect()
    }

    pub fn position(&self, index: usize) -> [f64; 3] {
        self.channels[index].position
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.channels.iter().position(|e| e.label == label)
    }

    /// Reorder channels; `order[i]` is the old index of new channel `i`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                actual: order.len(),
            });
        }
        Self::new(order.iter().map(|&i| self.channels[i].clone()).collect())
    }

    /// SHA-256 over labels and coordinate bit patterns, in channel order.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for e in &self.channels {
            hasher.update((e.label.len() as u64).to_le_bytes());
            hasher.update(e.label.as_bytes());
            for c in e.position {
                hasher.update(c.to_bits().to_le_bytes());
            }
        }
        hasher.finalize().iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    /// The `k` nearest other electrodes of `target`, by ascending distance;
    /// equal distances are ordered by ascending channel index.
    pub fn nearest_neighbors(&self, target: usize, k: usize) -> Result<Vec<Neighbor>> {
        let n = self.len();
        if target >= n {
            return Err(Error::ChannelOutOfRange {
                index: target,
                channels: n,
            });
        }
        if k == 0 || k > n - 1 {
            return Err(Error::NeighborCountOutOfRange { k, channels: n });
        }
        let origin = self.channels[target].position;
        let mut all: Vec<Neighbor> = self
            .channels
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != target)
            .map(|(index, e)| Neighbor {
                index,
                distance: distance(&origin, &e.position),
            })
            .collect();
        // stable sort keeps index order among ties
        all.sort_by(|a, b| a.distance.total_cmp(&b.distance));
        all.truncate(k);
        Ok(all)
    }

    /// Idealized extended 10/20 (10-10) layout with the common 64-channel
    /// label set, projected on a sphere of `radius_mm`.
    ///
    /// x points right, y toward the nasion, z up. Ring electrodes sit 72°
    /// from Cz; row electrodes are spaced along great circles between the
    /// midline and the ring.
    pub fn standard_64(radius_mm: f64) -> Self {
        let mut pos: Vec<(String, [f64; 3])> = Vec::with_capacity(64);
        let midline: [(&str, f64); 10] = [
            ("Fpz", 72.0),
            ("AFz", 54.0),
            ("Fz", 36.0),
            ("FCz", 18.0),
            ("Cz", 0.0),
            ("CPz", -18.0),
            ("Pz", -36.0),
            ("POz", -54.0),
            ("Oz", -72.0),
            ("Iz", -90.0),
        ];
        for (label, angle) in midline {
            let az = if angle >= 0.0 { 0.0 } else { 180.0 };
            pos.push((label.to_string(), sph(angle.abs(), az)));
        }
        let ring: [(&str, &str, f64); 8] = [
            ("Fp1", "Fp2", 18.0),
            ("AF7", "AF8", 36.0),
            ("F7", "F8", 54.0),
            ("FT7", "FT8", 72.0),
            ("T7", "T8", 90.0),
            ("TP7", "TP8", 108.0),
            ("P7", "P8", 126.0),
            ("PO7", "PO8", 144.0),
        ];
        for (left, right, az) in ring {
            pos.push((left.to_string(), sph(72.0, -az)));
            pos.push((right.to_string(), sph(72.0, az)));
        }
        pos.push(("O1".into(), sph(72.0, -162.0)));
        pos.push(("O2".into(), sph(72.0, 162.0)));
        pos.push(("P9".into(), sph(90.0, -126.0)));
        pos.push(("P10".into(), sph(90.0, 126.0)));

        let find = |pos: &[(String, [f64; 3])], l: &str| {
            pos.iter().find(|(n, _)| n == l).map(|(_, p)| *p).unwrap()
        };
        let rows: [(&str, &str, &str, &[u32]); 7] = [
            ("AF", "AFz", "AF7", &[3]),
            ("F", "Fz", "F7", &[1, 3, 5]),
            ("FC", "FCz", "FT7", &[1, 3, 5]),
            ("C", "Cz", "T7", &[1, 3, 5]),
            ("CP", "CPz", "TP7", &[1, 3, 5]),
            ("P", "Pz", "P7", &[1, 3, 5]),
            ("PO", "POz", "PO7", &[3]),
        ];
        for (row, mid, edge, numbers) in rows {
            let m = find(&pos, mid);
            let left_edge = find(&pos, edge);
            let right_edge = find(&pos, &edge.replace('7', "8"));
            for &num in numbers {
                let t = f64::from(num.div_ceil(2)) / 4.0;
                pos.push((format!("{row}{num}"), slerp(m, left_edge, t)));
                pos.push((format!("{row}{}", num + 1), slerp(m, right_edge, t)));
            }
        }
        let channels = pos
            .into_iter()
            .map(|(l, p)| Electrode::new(l, p.map(|c| c * radius_mm)))
            .collect();
        Self::new(channels).expect("built-in layout is valid")
    }

    /// `n` electrodes spread quasi-uniformly (Fibonacci lattice) over the
    /// upper hemisphere of radius `radius_mm`, labeled `E001`, `E002`, ...
    pub fn fibonacci_hemisphere(n: usize, radius_mm: f64) -> Result<Self> {
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let channels = (0..n)
            .map(|i| {
                let z = 1.0 - (i as f64 + 0.5) / n as f64;
                let r = (1.0 - z * z).sqrt();
                let theta = golden * i as f64;
                Electrode::new(
                    format!("E{:03}", i + 1),
                    [
                        radius_mm * r * theta.cos(),
                        radius_mm * r * theta.sin(),
                        radius_mm * z,
                    ],
                )
            })
            .collect();
        Self::new(channels)
    }
}

fn sph(polar_deg: f64, azimuth_deg: f64) -> [f64; 3] {
    let p = polar_deg.to_radians();
    let a = azimuth_deg.to_radians();
    [p.sin() * a.sin(), p.sin() * a.cos(), p.cos()]
}

fn slerp(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    let omega = dot.clamp(-1.0, 1.0).acos();
    let wa = ((1.0 - t) * omega).sin() / omega.sin();
    let wb = (t * omega).sin() / omega.sin();
    [
        wa * a[0] + wb * b[0],
        wa * a[1] + wb * b[1],
        wa * a[2] + wb * b[2],
    ]
}

/// Row-stochastic inverse-distance weights over each channel's k nearest
/// neighbors, stored as sparse rows.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationMatrix {
    rows: Vec<Vec<(usize, f64)>>,
    neighbor_count: usize,
}

impl InterpolationMatrix {
    /// Build the matrix for `k` neighbors. Fails when `k` is not in
    /// `1..=N-1`.
    pub fn build(montage: &ElectrodeMontage, k: usize) -> Result<Self> {
        Self::build_with(montage, k, false)
    }

    /// Like [`InterpolationMatrix::build`]; with `allow_small_montage` a `k`
    /// above `N-1` is clamped to `N-1` instead of rejected.
    pub fn build_with(montage: &ElectrodeMontage, k: usize, allow_small_montage: bool) -> Result<Self> {
        let n = montage.len();
        let k = if allow_small_montage && k > n - 1 {
            n - 1
        } else {
            k
        };
        let rows = (0..n)
            .map(|i| {
                let nb = montage.nearest_neighbors(i, k)?;
                let total: f64 = nb.iter().map(|x| 1.0 / x.distance).sum();
                Ok(nb
                    .iter()
                    .map(|x| (x.index, (1.0 / x.distance) / total))
                    .collect())
            })
            .collect::<Result<Vec<Vec<_>>>>()?;
        Ok(Self {
            rows,
            neighbor_count: k,
        })
    }

    /// Construct from explicit sparse rows. Rows must be non-negative, sum to
    /// one and never reference their own channel.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n = rows.len();
        let mut k = 0;
        for (i, row) in rows.iter().enumerate() {
            let mut sum = 0.0;
            for &(j, w) in row {
                if j >= n {
                    return Err(Error::ChannelOutOfRange { index: j, channels: n });
                }
                if j == i || w.is_nan() || w < 0.0 {
                    return Err(Error::InvalidConfig(format!(
                        "row {i}: invalid interpolation weight ({j}, {w})"
                    )));
                }
                sum += w;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidConfig(format!("row {i} sums to {sum}")));
            }
            k = k.max(row.len());
        }
        Ok(Self {
            rows,
            neighbor_count: k,
        })
    }

    pub fn channels(&self) -> usize {
        self.rows.len()
    }

    pub fn neighbor_count(&self) -> usize {
        self.neighbor_count
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let n = self.rows.len();
        let mut d = Array2::zeros((n, n));
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                d[[i, j]] = w;
            }
        }
        d
    }

    /// Interpolated estimate of channel `i` from `x`.
    #[inline]
    pub fn interpolate(&self, i: usize, x: &[f64]) -> f64 {
        self.rows[i].iter().map(|&(j, w)| w * x[j]).sum()
    }

    /// `out = D·x`
    pub fn apply(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.channels();
        for len in [x.len(), out.len()] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: len,
                });
            }
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.interpolate(i, x);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn collinear() -> ElectrodeMontage {
        ElectrodeMontage::parse("A 0 0 0\nB 1 0 0\nC 2 0 0\n").unwrap()
    }

    #[test]
    fn parses_in_file_order() {
        let m = ElectrodeMontage::parse("# header\nA 0 0 0\n\nB 1 0 0 # trailing\nC 2 0 0").unwrap();
        assert_eq!(m.labels(), ["A", "B", "C"]);
        assert_eq!(m.position(2), [2.0, 0.0, 0.0]);
    }

    #[test]
    fn rejects_invalid_geometry() {
        let dup = ElectrodeMontage::parse("A 0 0 0\nA 1 0 0\n").unwrap_err();
        assert_eq!(dup.name(), "DuplicateLabel");
        let same = ElectrodeMontage::parse("A 0 0 0\nB 0 0 0\n").unwrap_err();
        assert_eq!(same.name(), "CoincidentElectrodes");
        let nan = ElectrodeMontage::parse("A 0 0 NaN\nB 1 0 0\n").unwrap_err();
        assert_eq!(nan.name(), "NonFiniteCoordinate");
        let one = ElectrodeMontage::parse("A 0 0 0\n").unwrap_err();
        assert_eq!(one.name(), "TooFewChannels");
        let bad = ElectrodeMontage::parse("A 0 0\nB 1 0 0\n").unwrap_err();
        assert_eq!(bad.name(), "ParseError");
        // labels are case-sensitive
        assert!(ElectrodeMontage::parse("a 0 0 0\nA 1 0 0\n").is_ok());
    }

    #[test]
    fn text_round_trip() {
        let m = ElectrodeMontage::standard_64(120.0);
        assert_eq!(ElectrodeMontage::parse(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn neighbors_break_ties_by_index() {
        let m = collinear();
        let nb = m.nearest_neighbors(1, 2).unwrap();
        assert_eq!(nb, [Neighbor { index: 0, distance: 1.0 }, Neighbor { index: 2, distance: 1.0 }]);
        let nb = m.nearest_neighbors(0, 1).unwrap();
        assert_eq!(nb, [Neighbor { index: 1, distance: 1.0 }]);
        assert_eq!(m.nearest_neighbors(0, 3).unwrap_err().name(), "NeighborCountOutOfRange");
        assert_eq!(m.nearest_neighbors(0, 0).unwrap_err().name(), "NeighborCountOutOfRange");
    }

    #[test]
    fn symmetric_square_ties() {
        // corners of a square around a center electrode: all four at equal distance
        let m = ElectrodeMontage::parse("C 0 0 0\nN 0 1 0\nE 1 0 0\nS 0 -1 0\nW -1 0 0\n").unwrap();
        for _ in 0..3 {
            let nb: Vec<usize> = m.nearest_neighbors(0, 3).unwrap().iter().map(|n| n.index).collect();
            assert_eq!(nb, [1, 2, 3]);
        }
    }

    #[test]
    fn collinear_weights() {
        let d = InterpolationMatrix::build(&collinear(), 2).unwrap().to_dense();
        assert_abs_diff_eq!(d[[1, 0]], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(d[[1, 1]], 0.0);
        assert_abs_diff_eq!(d[[1, 2]], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(d[[0, 1]], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d[[0, 2]], 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn small_montage_flag() {
        let m = collinear();
        assert!(InterpolationMatrix::build(&m, 4).is_err());
        let d = InterpolationMatrix::build_with(&m, 4, true).unwrap();
        assert_eq!(d.neighbor_count(), 2);
    }

    #[test]
    fn standard_layout_is_sane() {
        let m = ElectrodeMontage::standard_64(120.0);
        assert_eq!(m.len(), 64);
        for label in ["Cz", "C1", "C2", "AF3", "AF4", "PO3", "PO4", "Iz", "P10"] {
            assert!(m.index_of(label).is_some(), "{label}");
        }
        for e in m.channels() {
            let r = distance(&e.position, &[0.0; 3]);
            assert_abs_diff_eq!(r, 120.0, epsilon = 1e-9);
        }
        // left hemisphere has negative x
        assert!(m.position(m.index_of("C3").unwrap())[0] < 0.0);
    }

    #[test]
    fn from_rows_validates() {
        assert!(InterpolationMatrix::from_rows(vec![vec![(1, 1.0)], vec![(0, 1.0)]]).is_ok());
        assert!(InterpolationMatrix::from_rows(vec![vec![(0, 1.0)], vec![(0, 1.0)]]).is_err());
        assert!(InterpolationMatrix::from_rows(vec![vec![(1, 0.5)], vec![(0, 1.0)]]).is_err());
    }
}
