//! Text serialization for curves: CSV with header `t,x1,...,xn`.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! write/read cycle reproduces the curve exactly.

use nalgebra::DVector;

use crate::curve::SampledCurve;
use crate::error::{GeoError, Result};

pub fn curve_to_csv(curve: &SampledCurve) -> String {
    let mut out = String::from("t");
    for i in 1..=curve.dim() {
        out.push_str(&format!(",x{i}"));
    }
    out.push('\n');
    for (t, p) in curve.times().iter().zip(curve.points()) {
        out.push_str(&format!("{t}"));
        for c in p.iter() {
            out.push_str(&format!(",{c}"));
        }
        out.push('\n');
    }
    out
}

pub fn curve_from_csv(text: &str) -> Result<SampledCurve> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| GeoError::MalformedCurve("empty CSV".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.first() != Some(&"t") || cols.len() < 2 {
        return Err(GeoError::MalformedCurve(format!(
            "expected header 't,x1,...', got '{header}'"
        )));
    }
    let dim = cols.len() - 1;
    let mut times = Vec::new();
    let mut points = Vec::new();
    for (row, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != dim + 1 {
            return Err(GeoError::MalformedCurve(format!(
                "row {}: {} fields, expected {}",
                row + 1,
                fields.len(),
                dim + 1
            )));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| GeoError::MalformedCurve(format!("row {}: bad float '{s}'", row + 1)))
        };
        times.push(parse(fields[0])?);
        let coords: Result<Vec<f64>> = fields[1..].iter().map(|s| parse(s)).collect();
        points.push(DVector::from_vec(coords?));
    }
    SampledCurve::new(times, points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_is_dimension_aware() {
        let c = SampledCurve::new(
            vec![0.0, 1.0],
            vec![
                DVector::from_vec(vec![1.0, 2.0, 3.0]),
                DVector::from_vec(vec![4.0, 5.0, 6.0]),
            ],
        )
        .unwrap();
        let csv = curve_to_csv(&c);
        assert!(csv.starts_with("t,x1,x2,x3\n"));
    }

    #[test]
    fn rejects_bad_headers_and_ragged_rows() {
        assert!(curve_from_csv("x,y\n0,1\n").is_err());
        assert!(curve_from_csv("t,x1\n0,1,2\n").is_err());
        assert!(curve_from_csv("t,x1\n0,abc\n").is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_lossless(
            raw in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 2..40)
        ) {
            let mut t = 0.0;
            let mut times = Vec::new();
            let mut points = Vec::new();
            for (dt, x) in raw {
                t += dt.abs() + 1e-6;
                times.push(t);
                points.push(DVector::from_vec(vec![x, dt]));
            }
            let c = SampledCurve::new(times, points).unwrap();
            let back = curve_from_csv(&curve_to_csv(&c)).unwrap();
            prop_assert_eq!(c, back);
        }
    }
}
