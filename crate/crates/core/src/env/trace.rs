//! Per-slot trace rows and their CSV encoding.

use std::io::Write;

use super::{NetworkState, SlotOutcome};

pub const TRACE_COLUMNS: [&str; 9] = [
    "t",
    "x_c",
    "y_c",
    "charger_E",
    "R_surv",
    "eta",
    "E_move",
    "E_charge_total",
    "N_dead",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    /// Slot index after the slot completed (1-based).
    pub t: usize,
    pub charger_position: [f64; 2],
    pub charger_energy: f64,
    pub survival: f64,
    pub efficiency: f64,
    pub e_move: f64,
    pub e_charge_total: f64,
    pub n_dead: usize,
    pub docked: bool,
}

impl SlotRecord {
    pub fn capture(state: &NetworkState, outcome: &SlotOutcome) -> Self {
        Self {
            t: state.slot,
            charger_position: state.charger.position,
            charger_energy: state.charger.remaining_energy,
            survival: outcome.metrics.survival,
            efficiency: outcome.metrics.efficiency,
            e_move: outcome.ledger.e_move,
            e_charge_total: outcome.ledger.e_charge_total(),
            n_dead: outcome.ledger.n_dead,
            docked: outcome.ledger.docked,
        }
    }

    pub fn fields(&self) -> Vec<String> {
        vec![
            self.t.to_string(),
            self.charger_position[0].to_string(),
            self.charger_position[1].to_string(),
            self.charger_energy.to_string(),
            self.survival.to_string(),
            self.efficiency.to_string(),
            self.e_move.to_string(),
            self.e_charge_total.to_string(),
            self.n_dead.to_string(),
        ]
    }
}

/// Writes the plain slot trace, one row per slot.
pub fn write_trace_csv<W: Write>(out: W, rows: &[SlotRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_COLUMNS)?;
    for row in rows {
        w.write_record(row.fields())?;
    }
    w.flush()?;
    Ok(())
}
