use super::{ChannelError, Sensor};

// Relative slack on the budget comparison so that k_max symbols of cost
// c_min are admissible despite rounding in Γ(n).
const BUDGET_SLACK: f64 = 1e-12;

/// Sublinear budget law `Γ(n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BudgetLaw {
    /// `a · n^b` with `a > 0`, `0 < b < 1`.
    Power { a: f64, b: f64 },
    /// `a · ln(1 + n)` with `a > 0`.
    Log { a: f64 },
}

impl BudgetLaw {
    pub fn sqrt() -> Self {
        BudgetLaw::Power { a: 1.0, b: 0.5 }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        match *self {
            BudgetLaw::Power { a, b } if a > 0.0 && a.is_finite() && b > 0.0 && b < 1.0 => Ok(()),
            BudgetLaw::Log { a } if a > 0.0 && a.is_finite() => Ok(()),
            other => Err(ChannelError::BadCostModel(format!(
                "budget law {other:?} is not sublinear and unbounded"
            ))),
        }
    }

    pub fn gamma(&self, n: usize) -> f64 {
        let n = n as f64;
        match *self {
            BudgetLaw::Power { a, b } => a * n.powf(b),
            BudgetLaw::Log { a } => a * n.ln_1p(),
        }
    }
}

/// Per-symbol input costs and budget laws of both sensors.
#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    costs: [Vec<f64>; 2],
    laws: [BudgetLaw; 2],
}

impl CostModel {
    /// Symbol 0 of each sensor must be the unique zero-cost symbol.
    pub fn new(costs: [Vec<f64>; 2], laws: [BudgetLaw; 2]) -> Result<Self, ChannelError> {
        for (l, c) in costs.iter().enumerate() {
            if c.first() != Some(&0.0) {
                return Err(ChannelError::BadCostModel(format!(
                    "sensor {}: symbol 0 must have cost 0",
                    l + 1
                )));
            }
            if let Some(bad) = c[1..].iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
                return Err(ChannelError::BadCostModel(format!(
                    "sensor {}: nonzero symbols need positive finite cost, got {bad}",
                    l + 1
                )));
            }
        }
        for law in &laws {
            law.validate()?;
        }
        Ok(Self { costs, laws })
    }

    /// Cost 0 for symbol 0 and 1 for every other symbol, same law for both.
    pub fn unit(sizes: [usize; 2], law: BudgetLaw) -> Result<Self, ChannelError> {
        let costs = sizes.map(|m| (0..m.max(1)).map(|x| if x == 0 { 0.0 } else { 1.0 }).collect());
        Self::new(costs, [law, law])
    }

    pub fn costs(&self, sensor: Sensor) -> &[f64] {
        &self.costs[sensor_index(sensor)]
    }

    pub fn law(&self, sensor: Sensor) -> BudgetLaw {
        self.laws[sensor_index(sensor)]
    }

    pub fn laws(&self) -> [BudgetLaw; 2] {
        self.laws
    }

    pub fn cost(&self, sensor: Sensor, symbol: usize) -> f64 {
        self.costs[sensor_index(sensor)][symbol]
    }

    /// Smallest positive cost; infinite when the sensor has only symbol 0.
    pub fn c_min(&self, sensor: Sensor) -> f64 {
        self.costs(sensor)[1..]
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// `Γ_ℓ(n)`.
    pub fn budget(&self, sensor: Sensor, n: usize) -> f64 {
        self.law(sensor).gamma(n)
    }

    pub fn k_max(&self, sensor: Sensor, n: usize) -> usize {
        let c = self.c_min(sensor);
        if c.is_infinite() {
            return 0;
        }
        (self.budget(sensor, n) / c * (1.0 + BUDGET_SLACK)).floor() as usize
    }
}

fn sensor_index(sensor: Sensor) -> usize {
    match sensor {
        Sensor::S1 => 0,
        Sensor::S2 => 1,
    }
}

/// Budget arithmetic at blocklength `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostBudget {
    pub n: usize,
    pub k_max_1: usize,
    pub k_max_2: usize,
    pub tau_max: usize,
    /// Length of each marker block.
    pub k: usize,
}

impl CostBudget {
    /// Computes the fields without checking that the marker blocks fit.
    pub fn unchecked(cm: &CostModel, n: usize) -> Self {
        let k_max_1 = cm.k_max(Sensor::S1, n);
        let k_max_2 = cm.k_max(Sensor::S2, n);
        CostBudget {
            n,
            k_max_1,
            k_max_2,
            tau_max: 2 * k_max_1 + 2 * k_max_2,
            k: k_max_1.min(k_max_2) / 2,
        }
    }
}

/// Budget at blocklength `n`; fails unless `1 <= k` and `2k < n`.
pub fn cost_budget(cm: &CostModel, n: usize) -> Result<CostBudget, ChannelError> {
    let b = CostBudget::unchecked(cm, n);
    if b.k < 1 || 2 * b.k >= n {
        return Err(ChannelError::BlocklengthTooSmall { n, k: b.k });
    }
    Ok(b)
}

/// Whether `x_seq` (of length `n`) meets the block cost constraint of `sensor`.
pub fn admissible(x_seq: &[usize], sensor: Sensor, cm: &CostModel, n: usize) -> bool {
    let costs = cm.costs(sensor);
    if x_seq.len() != n || x_seq.iter().any(|&x| x >= costs.len()) {
        return false;
    }
    let total: f64 = x_seq.iter().map(|&x| costs[x]).sum();
    total <= cm.budget(sensor, n) * (1.0 + BUDGET_SLACK)
}
