//! CSV readers and writers. Every file has a header row; floats are written
//! with 17 significant digits so values round-trip exactly.

use std::io::{Read, Write};

use num_complex::Complex64;

use crate::datapath::FixedThresholdTrace;
use crate::error::{Error, Result};
use crate::hw::LogLut;
use crate::recon::{DetectionResult, Spectrum};

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(out)
}

fn finish<W: Write>(mut w: csv::Writer<W>) -> Result<()> {
    w.flush()?;
    Ok(())
}

/// `index,re,im`
pub fn write_signal<W: Write>(out: W, samples: &[Complex64]) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["index", "re", "im"])?;
    for (i, s) in samples.iter().enumerate() {
        w.write_record([i.to_string(), fmt_f64(s.re), fmt_f64(s.im)])?;
    }
    finish(w)
}

fn parse_f64(field: Option<&str>, line: usize, name: &str) -> Result<f64> {
    field
        .ok_or_else(|| Error::Csv(format!("line {line}: missing `{name}`")))?
        .trim()
        .parse()
        .map_err(|e| Error::Csv(format!("line {line}: bad `{name}`: {e}")))
}

/// Reads an `index,re,im` file. Rows must be in index order starting at zero.
pub fn read_signal<R: Read>(input: R) -> Result<Vec<Complex64>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["index", "re", "im"] {
        return Err(Error::Csv(format!("expected header `index,re,im`, got `{}`", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let mut samples = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let line = row + 2;
        let index: usize = record
            .get(0)
            .unwrap_or_default()
            .parse()
            .map_err(|e| Error::Csv(format!("line {line}: bad index: {e}")))?;
        if index != row {
            return Err(Error::Csv(format!("line {line}: expected index {row}, got {index}")));
        }
        let re = parse_f64(record.get(1), line, "re")?;
        let im = parse_f64(record.get(2), line, "im")?;
        samples.push(Complex64::new(re, im));
    }
    if samples.is_empty() {
        return Err(Error::Csv("signal file has no samples".into()));
    }
    Ok(samples)
}

/// `bin,re,im,magnitude`
pub fn write_spectrum<W: Write>(out: W, spectrum: &Spectrum) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["bin", "re", "im", "magnitude"])?;
    for (f, b) in spectrum.bins().iter().enumerate() {
        w.write_record([f.to_string(), fmt_f64(b.re), fmt_f64(b.im), fmt_f64(b.norm())])?;
    }
    finish(w)
}

/// Reads the complex bins back from a `bin,re,im,magnitude` file.
pub fn read_spectrum<R: Read>(input: R) -> Result<Spectrum> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut bins = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let line = row + 2;
        bins.push(Complex64::new(
            parse_f64(record.get(1), line, "re")?,
            parse_f64(record.get(2), line, "im")?,
        ));
    }
    Ok(Spectrum::new(bins))
}

/// `threshold,variance,n_detected,positions` with positions joined by `;`.
pub fn write_detection<W: Write>(out: W, det: &DetectionResult) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["threshold", "variance", "n_detected", "positions"])?;
    let positions = det
        .positions
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(";");
    w.write_record([
        fmt_f64(det.threshold),
        fmt_f64(det.variance),
        det.positions.len().to_string(),
        positions,
    ])?;
    finish(w)
}

/// `index,value`
pub fn write_lut<W: Write>(out: W, lut: &LogLut) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["index", "value"])?;
    for (i, v) in lut.entries().iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()])?;
    }
    finish(w)
}

/// `stage,raw_value,scaled_value`
pub fn write_trace<W: Write>(out: W, trace: &FixedThresholdTrace) -> Result<()> {
    let mut w = writer(out);
    w.write_record(["stage", "raw_value", "scaled_value"])?;
    for (stage, raw, scaled) in trace.stages() {
        w.write_record([stage.to_string(), fmt_f64(raw), fmt_f64(scaled)])?;
    }
    finish(w)
}

/// Generic table writer for harness reports.
pub fn write_table<W: Write>(out: W, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    finish(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn signal_header_and_rows() {
        let mut buf = Vec::new();
        write_signal(&mut buf, &[Complex64::new(1.0, 0.0), Complex64::new(-2.0, 0.5)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("index,re,im"));
        assert_eq!(lines.next(), Some("0,1.0000000000000000e0,0.0000000000000000e0"));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn read_signal_rejects_garbage() {
        assert!(read_signal("a,b,c\n1,2,3\n".as_bytes()).is_err());
        assert!(read_signal("index,re,im\n1,0,0\n".as_bytes()).is_err());
        assert!(read_signal("index,re,im\n0,x,0\n".as_bytes()).is_err());
        assert!(read_signal("index,re,im\n".as_bytes()).is_err());
    }

    #[test]
    fn detection_row() {
        let det = DetectionResult {
            threshold: 2.5,
            variance: 1.0,
            positions: vec![3, 17, 40],
        };
        let mut buf = Vec::new();
        write_detection(&mut buf, &det).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.ends_with(",3,3;17;40\n"), "{text}");
    }

    proptest! {
        #[test]
        fn signal_round_trips_bit_exactly(v in prop::collection::vec((-1e6f64..1e6, -1e6f64..1e6), 1..40)) {
            let samples: Vec<Complex64> = v.iter().map(|&(re, im)| Complex64::new(re, im)).collect();
            let mut buf = Vec::new();
            write_signal(&mut buf, &samples).unwrap();
            prop_assert_eq!(read_signal(buf.as_slice()).unwrap(), samples);
        }
    }
}
