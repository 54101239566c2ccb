use super::config::LinkScenario;
use crate::channel::{Decibels, FibreLink};
use crate::constants::FIBRE_SPEED;

/// (name, L, L1, L2, A1, A2, t1, t2) with km, dB and µs as tabulated.
const TABLE: [(&str, f64, f64, f64, f64, f64, f64, f64); 4] = [
    ("l6", 6.0, 2.6, 3.3, -0.7, -0.8, 28.5, 35.5),
    ("l11", 11.0, 5.4, 5.5, -1.5, -1.3, 57.1, 71.0),
    ("l23", 23.0, 11.3, 11.4, -3.3, -2.8, 114.2, 124.3),
    ("l33", 33.0, 16.5, 16.6, -4.5, -4.1, 171.2, 177.5),
];

pub const PRESET_NAMES: [&str; 4] = ["l6", "l11", "l23", "l33"];

fn link(length_km: f64, db: f64) -> FibreLink {
    FibreLink { length_km, attenuation_db: Decibels::loss(db), propagation_speed: FIBRE_SPEED }
}

pub fn table_presets() -> Vec<LinkScenario> {
    TABLE
        .iter()
        .map(|&(name, total, l1, l2, a1, a2, t1, t2)| LinkScenario {
            name: name.to_string(),
            total_length_km: total,
            link1: link(l1, a1),
            link2: link(l2, a2),
            readout_time1: t1 * 1e-6,
            readout_time2: t2 * 1e-6,
        })
        .collect()
}

pub fn preset(name: &str) -> Option<LinkScenario> {
    table_presets().into_iter().find(|p| p.name == name)
}

/// No long fibres but the readout delays of `row` (reference measurements at equal storage time).
pub fn delay_only(row: &LinkScenario) -> LinkScenario {
    LinkScenario {
        name: format!("{}-delay", row.name),
        total_length_km: 0.0,
        link1: link(0.0, 0.0),
        link2: link(0.0, 0.0),
        readout_time1: row.readout_time1,
        readout_time2: row.readout_time2,
    }
}

/// Length whose two-way signalling time matches the mean readout delay: (2/3)c·(t1+t2)/2.
pub fn equivalent_length_km(row: &LinkScenario) -> f64 {
    FIBRE_SPEED * 0.5 * (row.readout_time1 + row.readout_time2) / 1e3
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::link_transmission;

    #[test]
    fn rows_verbatim() {
        let p = table_presets();
        assert_eq!(p.len(), 4);
        let l33 = preset("l33").unwrap();
        assert_eq!(l33.link1.length_km, 16.5);
        assert_eq!(l33.link2.attenuation_db.0, 4.1);
        assert!((l33.readout_time1 - 171.2e-6).abs() < 1e-15);
        assert!((link_transmission(&l33.link1) - 0.354_813).abs() < 1e-6);
        for row in &p {
            row.link1.validate().unwrap();
            row.link2.validate().unwrap();
            assert!((row.link1.length_km + row.link2.length_km - row.total_length_km).abs() < 0.3);
        }
        assert!(preset("l7").is_none());
    }
}
