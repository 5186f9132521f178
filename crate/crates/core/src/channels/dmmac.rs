use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::ChannelError;
use crate::prob::NORM_TOL;

/// Row-sum tolerance accepted when reading kernel files.
const FILE_ROW_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sensor {
    S1,
    S2,
}

/// Connectivity class of a discrete MAC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChannelClass {
    /// Every input pair reaches every output.
    Full,
    /// Both sensors can toggle some output on and off.
    Sparse,
    /// Only sensor 1 can toggle an output.
    SparseFull,
    /// Only sensor 2 can toggle an output.
    FullSparse,
}

impl ChannelClass {
    pub fn name(self) -> &'static str {
        match self {
            ChannelClass::Full => "full",
            ChannelClass::Sparse => "sparse",
            ChannelClass::SparseFull => "sparse_full",
            ChannelClass::FullSparse => "full_sparse",
        }
    }
}

impl fmt::Display for ChannelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ChannelClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(ChannelClass::Full),
            "sparse" => Ok(ChannelClass::Sparse),
            "sparse_full" => Ok(ChannelClass::SparseFull),
            "full_sparse" => Ok(ChannelClass::FullSparse),
            other => Err(format!("unknown channel class {other:?}")),
        }
    }
}

/// Symbols witnessing that one sensor can switch an output on or off.
///
/// For sensor 1: `P(output | blocked, partner) = 0` and
/// `P(output | enabled, partner) > 0`, with `partner` an input of sensor 2.
/// For sensor 2 the roles of the two inputs are exchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToggleWitness {
    pub blocked: usize,
    pub enabled: usize,
    pub partner: usize,
    pub output: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MarkerSet {
    pub sensor1: Option<ToggleWitness>,
    pub sensor2: Option<ToggleWitness>,
}

impl MarkerSet {
    /// Re-checks every witness against the kernel.
    pub fn verify(&self, ch: &Dmmac) -> bool {
        let ok1 = self.sensor1.is_none_or(|w| {
            w.blocked < ch.dims[0]
                && w.enabled < ch.dims[0]
                && w.partner < ch.dims[1]
                && w.output < ch.dims[2]
                && ch.prob(w.output, w.blocked, w.partner) == 0.0
                && ch.prob(w.output, w.enabled, w.partner) > 0.0
        });
        let ok2 = self.sensor2.is_none_or(|w| {
            w.blocked < ch.dims[1]
                && w.enabled < ch.dims[1]
                && w.partner < ch.dims[0]
                && w.output < ch.dims[2]
                && ch.prob(w.output, w.partner, w.blocked) == 0.0
                && ch.prob(w.output, w.partner, w.enabled) > 0.0
        });
        ok1 && ok2
    }
}

/// Discrete memoryless MAC with kernel `P(y | x1, x2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dmmac {
    dims: [usize; 3],
    kernel: Vec<f64>,
    cdf: Vec<f64>,
}

impl Dmmac {
    /// `kernel` is row-major over `(x1, x2, y)`.
    pub fn new(dims: [usize; 3], kernel: Vec<f64>) -> Result<Self, ChannelError> {
        Self::with_tolerance(dims, kernel, NORM_TOL)
    }

    fn with_tolerance(dims: [usize; 3], kernel: Vec<f64>, tol: f64) -> Result<Self, ChannelError> {
        if dims.contains(&0) {
            return Err(ChannelError::BadDims(dims));
        }
        let expected = dims.iter().product();
        if kernel.len() != expected {
            return Err(ChannelError::WrongSize {
                expected,
                got: kernel.len(),
            });
        }
        let ny = dims[2];
        for (row, chunk) in kernel.chunks(ny).enumerate() {
            let sum: f64 = chunk.iter().sum();
            let valid = chunk.iter().all(|&p| p >= 0.0 && p.is_finite());
            if !valid || (sum - 1.0).abs() > tol {
                return Err(ChannelError::BadRow {
                    x1: row / dims[1],
                    x2: row % dims[1],
                    sum,
                });
            }
        }
        let mut cdf = Vec::with_capacity(kernel.len());
        for chunk in kernel.chunks(ny) {
            let mut acc = 0.0;
            for &p in chunk {
                acc += p;
                cdf.push(acc);
            }
        }
        Ok(Self { dims, kernel, cdf })
    }

    /// Builds a kernel from a function `(x1, x2, y) -> probability`.
    pub fn from_fn<F>(dims: [usize; 3], f: F) -> Result<Self, ChannelError>
    where
        F: Fn(usize, usize, usize) -> f64,
    {
        let mut kernel = Vec::with_capacity(dims.iter().product());
        for x1 in 0..dims[0] {
            for x2 in 0..dims[1] {
                for y in 0..dims[2] {
                    kernel.push(f(x1, x2, y));
                }
            }
        }
        Self::new(dims, kernel)
    }

    /// Parses the plain-text kernel format: a header line `|X1| |X2| |Y|`
    /// followed by one line of `|Y|` probabilities per `(x1, x2)` pair in
    /// row-major order. Blank lines and lines starting with `#` are ignored.
    /// Rows must sum to 1 within 1e-9 and are renormalized.
    pub fn from_text(text: &str) -> Result<Self, ChannelError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        let (hline, header) = lines.next().ok_or(ChannelError::Parse {
            line: 1,
            message: "missing header".into(),
        })?;
        let dims = parse_numbers::<usize>(header, hline)?;
        let [nx1, nx2, ny] = <[usize; 3]>::try_from(dims.as_slice()).map_err(|_| ChannelError::Parse {
            line: hline,
            message: format!("header needs 3 sizes, got {}", dims.len()),
        })?;
        if nx1 == 0 || nx2 == 0 || ny == 0 {
            return Err(ChannelError::Parse {
                line: hline,
                message: "sizes must be positive".into(),
            });
        }

        let mut kernel = Vec::with_capacity(nx1 * nx2 * ny);
        let mut rows = 0;
        for (line, text) in lines {
            if rows == nx1 * nx2 {
                return Err(ChannelError::Parse {
                    line,
                    message: "unexpected extra row".into(),
                });
            }
            let row = parse_numbers::<f64>(text, line)?;
            if row.len() != ny {
                return Err(ChannelError::Parse {
                    line,
                    message: format!("expected {ny} probabilities, got {}", row.len()),
                });
            }
            if let Some(bad) = row.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
                return Err(ChannelError::Parse {
                    line,
                    message: format!("invalid probability {bad}"),
                });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > FILE_ROW_TOL {
                return Err(ChannelError::Parse {
                    line,
                    message: format!(
                        "row (x1={}, x2={}) sums to {sum}",
                        rows / nx2,
                        rows % nx2
                    ),
                });
            }
            kernel.extend(row.iter().map(|p| p / sum));
            rows += 1;
        }
        if rows != nx1 * nx2 {
            return Err(ChannelError::Parse {
                line: text.lines().count() + 1,
                message: format!("expected {} rows, got {rows}", nx1 * nx2),
            });
        }
        Self::with_tolerance([nx1, nx2, ny], kernel, FILE_ROW_TOL)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {} {}\n", self.dims[0], self.dims[1], self.dims[2]);
        for row in self.kernel.chunks(self.dims[2]) {
            let cells: Vec<String> = row.iter().map(|p| format!("{p}")).collect();
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    /// `P(y | x1, x2)`.
    pub fn prob(&self, y: usize, x1: usize, x2: usize) -> f64 {
        self.kernel[(x1 * self.dims[1] + x2) * self.dims[2] + y]
    }

    /// Outputs that some input pair can produce.
    pub fn reachable_outputs(&self) -> Vec<usize> {
        (0..self.dims[2])
            .filter(|&y| {
                (0..self.dims[0]).any(|x1| (0..self.dims[1]).any(|x2| self.prob(y, x1, x2) > 0.0))
            })
            .collect()
    }

    /// Drops outputs that no input pair can produce; rows are unchanged.
    pub fn prune_unreachable_outputs(&self) -> Result<Dmmac, ChannelError> {
        let keep = self.reachable_outputs();
        if keep.is_empty() {
            return Err(ChannelError::EmptyOutputAlphabet);
        }
        if keep.len() == self.dims[2] {
            return Ok(self.clone());
        }
        let dims = [self.dims[0], self.dims[1], keep.len()];
        Dmmac::from_fn(dims, |x1, x2, y| self.prob(keep[y], x1, x2))
    }

    /// Whether `sensor` can switch some output on or off for a fixed input
    /// of the other sensor.
    pub fn toggle_predicate(&self, sensor: Sensor) -> bool {
        self.first_witness(sensor).is_some()
    }

    // Scan order: partner input, then output, then blocked input, then
    // enabled input; the first hit wins.
    fn first_witness(&self, sensor: Sensor) -> Option<ToggleWitness> {
        let (own, other) = match sensor {
            Sensor::S1 => (self.dims[0], self.dims[1]),
            Sensor::S2 => (self.dims[1], self.dims[0]),
        };
        let p = |y: usize, mine: usize, partner: usize| match sensor {
            Sensor::S1 => self.prob(y, mine, partner),
            Sensor::S2 => self.prob(y, partner, mine),
        };
        for partner in 0..other {
            for output in 0..self.dims[2] {
                for blocked in 0..own {
                    if p(output, blocked, partner) != 0.0 {
                        continue;
                    }
                    if let Some(enabled) = (0..own).find(|&e| p(output, e, partner) > 0.0) {
                        return Some(ToggleWitness {
                            blocked,
                            enabled,
                            partner,
                            output,
                        });
                    }
                }
            }
        }
        None
    }

    pub fn classify(&self) -> ChannelClass {
        let pruned = self
            .prune_unreachable_outputs()
            .expect("valid kernels reach some output");
        match (
            pruned.toggle_predicate(Sensor::S1),
            pruned.toggle_predicate(Sensor::S2),
        ) {
            (true, true) => ChannelClass::Sparse,
            (true, false) => ChannelClass::SparseFull,
            (false, true) => ChannelClass::FullSparse,
            (false, false) => ChannelClass::Full,
        }
    }

    /// Marker symbols for the achievability scheme of `class`, indexed in
    /// this channel's own (unpruned) alphabets.
    pub fn find_markers(&self, class: ChannelClass) -> Result<MarkerSet, ChannelError> {
        let (need1, need2) = match class {
            ChannelClass::Full => return Err(ChannelError::NoMarkers),
            ChannelClass::Sparse => (true, true),
            ChannelClass::SparseFull => (true, false),
            ChannelClass::FullSparse => (false, true),
        };
        let sensor1 = if need1 {
            Some(self.first_witness(Sensor::S1).ok_or(ChannelError::NoMarkers)?)
        } else {
            None
        };
        let sensor2 = if need2 {
            Some(self.first_witness(Sensor::S2).ok_or(ChannelError::NoMarkers)?)
        } else {
            None
        };
        Ok(MarkerSet { sensor1, sensor2 })
    }

    /// One channel use.
    pub fn sample<R: Rng + ?Sized>(&self, x1: usize, x2: usize, rng: &mut R) -> usize {
        let ny = self.dims[2];
        let row = (x1 * self.dims[1] + x2) * ny;
        let cdf = &self.cdf[row..row + ny];
        let u: f64 = rng.random();
        match cdf.iter().position(|&c| c > u) {
            Some(y) => y,
            // u landed in the rounding gap above the last partial sum.
            None => (0..ny)
                .rev()
                .find(|&y| self.kernel[row + y] > 0.0)
                .expect("row has mass"),
        }
    }

    /// Memoryless transmission of two input sequences.
    pub fn transmit<R: Rng + ?Sized>(
        &self,
        x1: &[usize],
        x2: &[usize],
        rng: &mut R,
    ) -> Result<Vec<usize>, ChannelError> {
        if x1.len() != x2.len() {
            return Err(ChannelError::LengthMismatch(x1.len(), x2.len()));
        }
        Ok(x1
            .iter()
            .zip(x2)
            .map(|(&a, &b)| self.sample(a, b, rng))
            .collect())
    }
}

fn parse_numbers<T: FromStr>(text: &str, line: usize) -> Result<Vec<T>, ChannelError> {
    text.split_whitespace()
        .map(|tok| {
            tok.parse::<T>().map_err(|_| ChannelError::Parse {
                line,
                message: format!("cannot parse {tok:?}"),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Y = x1 + x2 + Z over {0, 1} inputs, Z uniform on {0, 1}.
    fn binary_adder() -> Dmmac {
        Dmmac::from_fn([2, 2, 4], |x1, x2, y| {
            let s = x1 + x2;
            if y == s || y == s + 1 {
                0.5
            } else {
                0.0
            }
        })
        .unwrap()
    }

    /// Y = S1 x1 + S2 x2 + Z with x, S in {-1, 1} and Z uniform on {0, 1}.
    /// `s1`, `s2` give P(S = +1). Outputs are -2..=3 mapped to 0..=5.
    fn random_sign_adder(s1: f64, s2: f64) -> Dmmac {
        let xs = [-1i32, 1];
        Dmmac::from_fn([2, 2, 6], |a, b, y| {
            let target = y as i32 - 2;
            let mut p = 0.0;
            for (sa, pa) in [(1, s1), (-1, 1.0 - s1)] {
                for (sb, pb) in [(1, s2), (-1, 1.0 - s2)] {
                    for z in [0, 1] {
                        if sa * xs[a] + sb * xs[b] + z == target {
                            p += pa * pb * 0.5;
                        }
                    }
                }
            }
            p
        })
        .unwrap()
    }

    #[test]
    fn adder_kernel_by_hand() {
        let ch = binary_adder();
        // Enumerated: P(0|0,0)=P(1|0,0)=1/2; P(0|1,x2)=0 for both x2.
        assert_eq!(ch.prob(0, 0, 0), 0.5);
        assert_eq!(ch.prob(0, 1, 0), 0.0);
        assert_eq!(ch.prob(0, 1, 1), 0.0);
        assert_eq!(ch.prob(3, 1, 1), 0.5);
        assert!(ch.toggle_predicate(Sensor::S1));
        assert!(ch.toggle_predicate(Sensor::S2));
        assert_eq!(ch.classify(), ChannelClass::Sparse);
    }

    #[test]
    fn adder_markers_first_in_scan_order() {
        let ch = binary_adder();
        let m = ch.find_markers(ChannelClass::Sparse).unwrap();
        let expected = ToggleWitness {
            blocked: 1,
            enabled: 0,
            partner: 0,
            output: 0,
        };
        assert_eq!(m.sensor1, Some(expected));
        assert_eq!(m.sensor2, Some(expected));
        assert!(m.verify(&ch));
    }

    #[test]
    fn positive_kernel_is_full() {
        let ch = Dmmac::from_fn([2, 3, 2], |x1, x2, y| {
            let p = 0.2 + 0.1 * (x1 + x2) as f64;
            if y == 0 {
                p
            } else {
                1.0 - p
            }
        })
        .unwrap();
        assert!(!ch.toggle_predicate(Sensor::S1));
        assert!(!ch.toggle_predicate(Sensor::S2));
        assert_eq!(ch.classify(), ChannelClass::Full);
        assert_eq!(ch.find_markers(ChannelClass::Full), Err(ChannelError::NoMarkers));
        assert_eq!(ch.prune_unreachable_outputs().unwrap(), ch);
    }

    #[test]
    fn channel_of_first_input_only() {
        let ch = Dmmac::from_fn([2, 2, 2], |x1, _, y| if x1 == y { 1.0 } else { 0.0 }).unwrap();
        assert!(ch.toggle_predicate(Sensor::S1));
        assert!(!ch.toggle_predicate(Sensor::S2));
        assert_eq!(ch.classify(), ChannelClass::SparseFull);
        let m = ch.find_markers(ChannelClass::SparseFull).unwrap();
        assert!(m.sensor2.is_none());
        assert!(m.verify(&ch));
    }

    #[test]
    fn random_sign_adder_classes() {
        assert_eq!(random_sign_adder(1.0, 1.0).classify(), ChannelClass::Sparse);
        assert_eq!(random_sign_adder(0.5, 0.5).classify(), ChannelClass::Full);
        assert_eq!(random_sign_adder(1.0, 0.5).classify(), ChannelClass::SparseFull);
        assert_eq!(random_sign_adder(0.5, 1.0).classify(), ChannelClass::FullSparse);
    }

    #[test]
    fn random_sign_adder_markers() {
        let ch = random_sign_adder(1.0, 0.5);
        let m = ch.find_markers(ChannelClass::SparseFull).unwrap();
        // x1 = -1 cannot reach Y = 3 (index 5); x1 = +1 can, whatever x2 is.
        let w = m.sensor1.unwrap();
        assert!(m.verify(&ch));
        assert_eq!(ch.prob(w.output, w.blocked, w.partner), 0.0);
        assert!(m.sensor2.is_none());
    }

    #[test]
    fn pruning() {
        let ch = Dmmac::from_fn([2, 2, 3], |_, _, y| if y == 1 { 0.0 } else { 0.5 }).unwrap();
        let pruned = ch.prune_unreachable_outputs().unwrap();
        assert_eq!(pruned.dims(), [2, 2, 2]);
        // Without pruning the zero column would not make the channel sparse.
        assert_eq!(ch.classify(), ChannelClass::Full);

        let ch = Dmmac::from_fn([2, 2, 3], |x1, x2, y| match (x1, x2, y) {
            (1, 1, 2) | (1, 1, 1) => 0.5,
            (1, 1, _) => 0.0,
            (_, _, 0) => 1.0,
            _ => 0.0,
        })
        .unwrap();
        assert_eq!(ch.prune_unreachable_outputs().unwrap().dims(), [2, 2, 3]);
    }

    #[test]
    fn text_round_trip_and_errors() {
        let ch = binary_adder();
        assert_eq!(Dmmac::from_text(&ch.to_text()).unwrap(), ch);

        let bad = "2 1 2\n0.5 0.5\n0.4 0.5\n";
        match Dmmac::from_text(bad) {
            Err(ChannelError::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("x1=1, x2=0"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            Dmmac::from_text("2 2\n"),
            Err(ChannelError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            Dmmac::from_text("1 1 2\n0.5 0.5\n1 0\n"),
            Err(ChannelError::Parse { line: 3, .. })
        ));
        assert!(matches!(
            Dmmac::from_text("1 2 2\n0.5 0.5\n"),
            Err(ChannelError::Parse { .. })
        ));
        // Tolerance 1e-9 on file rows.
        assert!(Dmmac::from_text("1 1 2\n0.5 0.5000000001\n").is_ok());
    }

    #[test]
    fn sampling_respects_zeros() {
        let ch = binary_adder();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..2000 {
            let y = ch.sample(1, 1, &mut rng);
            assert!(y == 2 || y == 3);
        }
        assert!(ch.transmit(&[0, 1], &[0], &mut rng).is_err());
    }

    #[test]
    fn random_kernels_partition_and_positivity() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let dims = [rng.random_range(1..4), rng.random_range(1..4), rng.random_range(1..5)];
            let mut kernel = Vec::new();
            for _ in 0..dims[0] * dims[1] {
                let mut row: Vec<f64> = (0..dims[2])
                    .map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random::<f64>() + 0.01 })
                    .collect();
                if row.iter().all(|&p| p == 0.0) {
                    let y = rng.random_range(0..dims[2]);
                    row[y] = 1.0;
                }
                let s: f64 = row.iter().sum();
                kernel.extend(row.iter().map(|p| p / s));
            }
            let ch = Dmmac::new(dims, kernel).unwrap();
            let pruned = ch.prune_unreachable_outputs().unwrap();
            let a1 = pruned.toggle_predicate(Sensor::S1);
            let a2 = pruned.toggle_predicate(Sensor::S2);
            let class = ch.classify();
            let labels = [
                class == ChannelClass::Sparse,
                class == ChannelClass::SparseFull,
                class == ChannelClass::FullSparse,
                class == ChannelClass::Full,
            ];
            assert_eq!(labels.iter().filter(|&&b| b).count(), 1);
            if !a1 && !a2 {
                assert!(pruned.kernel().iter().all(|&p| p > 0.0));
            }
            if class != ChannelClass::Full {
                assert!(ch.find_markers(class).unwrap().verify(&ch));
            }
        }
    }
}
