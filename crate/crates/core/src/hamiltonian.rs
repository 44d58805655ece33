//! He-H+ two-qubit Hamiltonians as weighted Pauli strings, one per
//! interatomic distance, and their grouping into four measurement settings.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{eig_hermitian, Op4, Pauli, PauliString};

/// Energy unit label carried by the coefficient table. No conversion is
/// applied anywhere.
pub const ENERGY_UNIT: &str = "MJ/mol";

/// Ground energy at R = 0.9 A quoted alongside the experiment. It equals half
/// of the exact minimum eigenvalue of the tabulated R = 0.9 Hamiltonian
/// (-5.7252 / 2 = -2.8626), so it is kept only as a reference constant.
pub const REFERENCE_GROUND_ENERGY_R09: f64 = -2.863;

use Pauli::{I, X, Z};

/// Column order of the coefficient table, after the distance column.
pub const TERM_ORDER: [PauliString; 9] = [
    PauliString::new(I, I),
    PauliString::new(I, Z),
    PauliString::new(Z, I),
    PauliString::new(Z, Z),
    PauliString::new(I, X),
    PauliString::new(Z, X),
    PauliString::new(X, I),
    PauliString::new(X, Z),
    PauliString::new(X, X),
];

pub const IDENTITY: PauliString = PauliString::new(I, I);

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PauliTerm {
    pub string: PauliString,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MolecularHamiltonian {
    /// Interatomic distance in angstrom.
    pub distance: f64,
    /// Terms in [`TERM_ORDER`].
    pub terms: Vec<PauliTerm>,
}

impl MolecularHamiltonian {
    /// Builds a Hamiltonian from the nine weights in [`TERM_ORDER`].
    pub fn new(distance: f64, weights: [f64; 9]) -> Result<Self> {
        if !distance.is_finite() || distance <= 0.0 {
            return Err(Error::Validation(format!(
                "interatomic distance must be finite and positive, got {distance}"
            )));
        }
        if let Some((k, w)) = weights.iter().enumerate().find(|(_, w)| !w.is_finite()) {
            return Err(Error::Validation(format!(
                "weight of {} at R = {distance} is not finite ({w})",
                TERM_ORDER[k]
            )));
        }
        let terms = TERM_ORDER
            .iter()
            .zip(weights)
            .map(|(&string, weight)| PauliTerm { string, weight })
            .collect();
        Ok(MolecularHamiltonian { distance, terms })
    }

    pub fn weight(&self, string: PauliString) -> Option<f64> {
        self.terms.iter().find(|t| t.string == string).map(|t| t.weight)
    }

    pub fn weights(&self) -> [f64; 9] {
        std::array::from_fn(|k| self.terms[k].weight)
    }

    pub fn matrix(&self) -> Op4 {
        build_matrix(self)
    }

    /// Exact minimum eigenvalue of the 4x4 matrix.
    pub fn ground_energy(&self) -> f64 {
        eig_hermitian(&self.matrix())
            .expect("a real combination of Pauli strings is Hermitian")
            .ground_energy()
    }
}

#[rustfmt::skip]
const BUILTIN_ROWS: [(f64, [f64; 9]); 10] = [
    (0.05, [33.9557, -2.4784, -2.4784, 0.2746, -0.1515, 0.1515, -0.1515, 0.1515, 0.1412]),
    (0.1,  [13.3605, -2.4368, -2.4368, 0.2081, -0.1626, 0.1626, -0.1626, 0.1626, 0.2097]),
    (0.2,  [3.633,   -2.2899, -2.2899, 0.1176, -0.1405, 0.1405, -0.1405, 0.1405, 0.3027]),
    (0.5,  [-2.3275, -1.5236, -1.5236, 0.1115, -0.157,  0.157,  -0.157,  0.157,  0.3309]),
    (0.7,  [-3.3893, -1.2073, -1.2073, 0.1626, -0.1968, 0.1968, -0.1968, 0.1968, 0.3052]),
    (0.9,  [-3.8505, -1.0466, -1.0466, 0.2356, -0.2288, 0.2288, -0.2288, 0.2288, 0.2613]),
    (1.1,  [-4.0539, -0.982,  -0.982,  0.3225, -0.243,  0.243,  -0.243,  0.243,  0.2053]),
    (1.5,  [-4.1594, -0.991,  -0.991,  0.4945, -0.2086, 0.2086, -0.2086, 0.2086, 0.0948]),
    (2.0,  [-4.1347, -1.0605, -1.0605, 0.6342, -0.1119, 0.1119, -0.1119, 0.1119, 0.0212]),
    (2.5,  [-4.0918, -1.1128, -1.1128, 0.701,  -0.0454, 0.0454, -0.0454, 0.0454, 0.0032]),
];

/// The ten tabulated distances from 0.05 A to 2.5 A.
pub fn builtin_table() -> Vec<MolecularHamiltonian> {
    BUILTIN_ROWS
        .iter()
        .map(|&(r, w)| MolecularHamiltonian::new(r, w).expect("builtin rows are valid"))
        .collect()
}

/// Distances are matched with a small absolute tolerance so that `0.9` typed
/// on a command line finds the `0.9` row.
pub fn find_distance(table: &[MolecularHamiltonian], distance: f64) -> Result<&MolecularHamiltonian> {
    table
        .iter()
        .find(|h| (h.distance - distance).abs() < 1e-9)
        .ok_or(Error::UnknownDistance(distance))
}

pub fn build_matrix(h: &MolecularHamiltonian) -> Op4 {
    h.terms
        .iter()
        .fold(Op4::zero(), |acc, t| acc + t.string.matrix().scale(t.weight))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeasurementGroup {
    pub setting_id: u8,
    pub strings: Vec<PauliString>,
    /// Nondegenerate joint observable whose eigenbasis is measured.
    pub basis_setting: PauliString,
}

/// Four settings: {II, IZ, ZI, ZZ} in ZZ, {IX, ZX} in ZX, {XI, XZ} in XZ and
/// {XX} in XX.
pub fn measurement_groups(_h: &MolecularHamiltonian) -> Vec<MeasurementGroup> {
    standard_groups()
}

pub fn standard_groups() -> Vec<MeasurementGroup> {
    let g = |id: u8, names: &[&str], basis: &str| MeasurementGroup {
        setting_id: id,
        strings: names.iter().map(|s| s.parse().unwrap()).collect(),
        basis_setting: basis.parse().unwrap(),
    };
    vec![
        g(1, &["II", "IZ", "ZI", "ZZ"], "ZZ"),
        g(2, &["IX", "ZX"], "ZX"),
        g(3, &["XI", "XZ"], "XZ"),
        g(4, &["XX"], "XX"),
    ]
}

/// `sum_j w_j <sigma_j>`. A missing `II` estimate is taken as exactly 1.
pub fn combine_expectations(
    h: &MolecularHamiltonian,
    pauli_estimates: &BTreeMap<PauliString, f64>,
) -> Result<f64> {
    h.terms.iter().try_fold(0.0, |acc, t| {
        let s = match pauli_estimates.get(&t.string) {
            Some(&v) => v,
            None if t.string.is_identity() => 1.0,
            None => return Err(Error::MissingEstimate(t.string)),
        };
        Ok(acc + t.weight * s)
    })
}

pub const CSV_HEADER: [&str; 10] = ["R", "II", "IZ", "ZI", "ZZ", "IX", "ZX", "XI", "XZ", "XX"];

pub fn read_table_csv<R: Read>(reader: R) -> Result<Vec<MolecularHamiltonian>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let got: Vec<&str> = header.iter().collect();
    if got != CSV_HEADER {
        return Err(Error::Parse {
            row: 1,
            column: "header".into(),
            message: format!("expected {:?}, found {:?}", CSV_HEADER.join(","), got.join(",")),
        });
    }

    let mut rows = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        // header is row 1
        let row = k + 2;
        let record = record.map_err(|e| Error::Parse {
            row,
            column: "-".into(),
            message: e.to_string(),
        })?;
        let mut values = [0.0; 10];
        for (col, value) in values.iter_mut().enumerate() {
            let cell = record.get(col).unwrap_or("");
            *value = cell.parse::<f64>().map_err(|_| Error::Parse {
                row,
                column: CSV_HEADER[col].into(),
                message: format!("cannot parse {cell:?} as a number"),
            })?;
        }
        let weights: [f64; 9] = values[1..].try_into().unwrap();
        rows.push(MolecularHamiltonian::new(values[0], weights)?);
    }
    rows.sort_by(|a, b| a.distance.total_cmp(&b.distance));
    Ok(rows)
}

pub fn load_table_csv(path: impl AsRef<Path>) -> Result<Vec<MolecularHamiltonian>> {
    let file = std::fs::File::open(path)?;
    read_table_csv(file)
}

pub fn write_table_csv<W: Write>(writer: W, table: &[MolecularHamiltonian]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for h in table {
        let mut record = vec![h.distance.to_string()];
        record.extend(h.weights().iter().map(|w| w.to_string()));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// Adds `extra` rows to `base`; a row at an existing distance replaces it.
pub fn merge_tables(
    base: Vec<MolecularHamiltonian>,
    extra: Vec<MolecularHamiltonian>,
) -> Vec<MolecularHamiltonian> {
    let mut merged = base;
    for h in extra {
        merged.retain(|b| (b.distance - h.distance).abs() >= 1e-9);
        merged.push(h);
    }
    merged.sort_by(|a, b| a.distance.total_cmp(&b.distance));
    merged
}
