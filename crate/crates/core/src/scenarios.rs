//! The two reference tuning experiments: plant, initial gain, reference
//! model, excitation and data window.

use crate::frit::{DesiredClosedLoop, FritData, FritError, TransferFunction};
use crate::plant_sim::{excitation_pulse, simulate_closed_loop, GainVector, PlantModel, SignalLog};

#[derive(Clone, Debug)]
pub struct Scenario {
    pub plant: PlantModel,
    pub initial_gain: GainVector,
    pub reference: DesiredClosedLoop,
    /// Number of logged steps; the whole log forms the data window.
    pub steps: usize,
}

impl Scenario {
    /// Closed-loop experiment under the initial gain with the unit pulse.
    pub fn simulate(&self) -> SignalLog {
        let v = excitation_pulse(self.steps).expect("scenario window holds the pulse");
        simulate_closed_loop(&self.plant, &self.initial_gain, &v).expect("scenario dimensions agree")
    }

    pub fn frit_data(&self) -> Result<FritData, FritError> {
        FritData::from_log(&self.simulate(), &self.reference, 0, self.steps)
    }

    pub fn by_number(example: u8) -> Option<Self> {
        match example {
            1 => Some(example1()),
            2 => Some(example2()),
            _ => None,
        }
    }
}

/// Second-order plant with an unstable open loop, tuned to place the poles at
/// {0, 0.5}. Sampling period 10 ms, 50 steps.
pub fn example1() -> Scenario {
    let den = vec![1.0, -0.5, 0.0];
    Scenario {
        plant: PlantModel::new(vec![vec![1.0, 1.0], vec![0.0, -2.0]], vec![0.0, 1.0], 0.01)
            .expect("static plant"),
        initial_gain: GainVector::new(vec![-0.8, 2.0]),
        reference: DesiredClosedLoop {
            components: vec![
                TransferFunction { num: vec![1.0], den: den.clone() },
                TransferFunction { num: vec![1.0, -1.0], den },
            ],
        },
        steps: 50,
    }
}

/// Third-order plant, 1 s sampling period, 30 steps.
pub fn example2() -> Scenario {
    let den = vec![1.0, -0.9803, 0.4318, -0.1753];
    Scenario {
        plant: PlantModel::new(
            vec![
                vec![0.9054, 0.6895, 0.2246],
                vec![-0.2246, 0.2317, 0.2403],
                vec![-0.2403, -0.9455, -0.2489],
            ],
            vec![0.0946, 0.2246, 0.2403],
            1.0,
        )
        .expect("static plant"),
        initial_gain: GainVector::new(vec![0.12, -2.37, -0.82]),
        reference: DesiredClosedLoop {
            components: vec![
                TransferFunction { num: vec![0.0946, 0.2105, 0.0342], den: den.clone() },
                TransferFunction { num: vec![0.2246, -0.1109, -0.1137], den: den.clone() },
                TransferFunction { num: vec![0.2403, -0.5083, 0.2680], den },
            ],
        },
        steps: 30,
    }
}

/// Published plaintext gains.
pub const EXAMPLE1_GAIN: [f64; 2] = [-0.5, 1.5];
pub const EXAMPLE2_GAIN: [f64; 3] = [0.1863750, 0.1357217, 0.1833644];
