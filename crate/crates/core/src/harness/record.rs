use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exact header of the simulation CSV.
pub const CSV_HEADER: &str = "t,h1,h2,h3,y1,y2,y3,yr1,yr2,u1,u2,zeta1,zeta2,xhat1,xhat2,xhat3,z1,z2,sat1,sat2";

/// One control period of a simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRecord {
    pub t: f64,
    /// True levels.
    pub h: [f64; 3],
    /// Measured levels.
    pub y: [f64; 3],
    pub y_r: Option<[f64; 2]>,
    /// Applied (clamped) pump flows.
    pub u: [f64; 2],
    pub zeta: Option<[f64; 2]>,
    pub x_hat: Option<[f64; 3]>,
    pub z: Option<[f64; 2]>,
    pub saturated: [bool; 2],
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    t: f64,
    h1: f64,
    h2: f64,
    h3: f64,
    y1: f64,
    y2: f64,
    y3: f64,
    yr1: Option<f64>,
    yr2: Option<f64>,
    u1: f64,
    u2: f64,
    zeta1: Option<f64>,
    zeta2: Option<f64>,
    xhat1: Option<f64>,
    xhat2: Option<f64>,
    xhat3: Option<f64>,
    z1: Option<f64>,
    z2: Option<f64>,
    sat1: u8,
    sat2: u8,
}

fn split2(v: Option<[f64; 2]>) -> (Option<f64>, Option<f64>) {
    (v.map(|a| a[0]), v.map(|a| a[1]))
}

fn join2(a: Option<f64>, b: Option<f64>) -> Option<[f64; 2]> {
    Some([a?, b?])
}

impl From<&SimRecord> for Row {
    fn from(r: &SimRecord) -> Self {
        let (yr1, yr2) = split2(r.y_r);
        let (zeta1, zeta2) = split2(r.zeta);
        let (z1, z2) = split2(r.z);
        Row {
            t: r.t,
            h1: r.h[0],
            h2: r.h[1],
            h3: r.h[2],
            y1: r.y[0],
            y2: r.y[1],
            y3: r.y[2],
            yr1,
            yr2,
            u1: r.u[0],
            u2: r.u[1],
            zeta1,
            zeta2,
            xhat1: r.x_hat.map(|x| x[0]),
            xhat2: r.x_hat.map(|x| x[1]),
            xhat3: r.x_hat.map(|x| x[2]),
            z1,
            z2,
            sat1: r.saturated[0] as u8,
            sat2: r.saturated[1] as u8,
        }
    }
}

impl From<Row> for SimRecord {
    fn from(r: Row) -> Self {
        let x_hat = match (r.xhat1, r.xhat2, r.xhat3) {
            (Some(a), Some(b), Some(c)) => Some([a, b, c]),
            _ => None,
        };
        SimRecord {
            t: r.t,
            h: [r.h1, r.h2, r.h3],
            y: [r.y1, r.y2, r.y3],
            y_r: join2(r.yr1, r.yr2),
            u: [r.u1, r.u2],
            zeta: join2(r.zeta1, r.zeta2),
            x_hat,
            z: join2(r.z1, r.z2),
            saturated: [r.sat1 != 0, r.sat2 != 0],
        }
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Write records with the fixed header; absent columns are left empty.
pub fn write_csv<W: Write>(records: &[SimRecord], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(out);
    for r in records {
        w.serialize(Row::from(r)).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<SimRecord>> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rd.headers().map_err(csv_err)?.iter().collect::<Vec<_>>().join(",");
    if header != CSV_HEADER {
        return Err(Error::Io(format!("unexpected CSV header: {header}")));
    }
    rd.deserialize::<Row>().map(|r| r.map(SimRecord::from).map_err(csv_err)).collect()
}
