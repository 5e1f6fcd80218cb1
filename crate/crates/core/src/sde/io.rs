use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use super::recorder::{FlagKind, PathRecorder};

/// Formats a float with 17 significant digits.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `t,U,V,T,ratio,<flag>` rows.
pub fn write_observables_csv<W: Write>(rec: &PathRecorder, mut w: W) -> io::Result<()> {
    let flag = rec.flag_kind.unwrap_or(FlagKind::Good).column();
    writeln!(w, "t,U,V,T,ratio,{flag}")?;
    for ((t, o), f) in rec.times.iter().zip(&rec.observables).zip(&rec.flags) {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            fmt_f64(*t),
            fmt_f64(o.u),
            fmt_f64(o.v),
            fmt_f64(o.t),
            fmt_f64(o.ratio()),
            u8::from(*f)
        )?;
    }
    Ok(())
}

/// JSON header line preceding binary snapshot rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub format: String,
    pub dim: usize,
    pub rows: usize,
    /// Row layout: `t` followed by the state components.
    pub columns: Vec<String>,
}

/// Writes a JSON header line, then one little-endian `f64` row `(t, x_1, .., x_N)` per state.
pub fn write_snapshots<W: Write>(rec: &PathRecorder, mut w: W) -> io::Result<()> {
    let dim = rec.states.first().map_or(0, Vec::len);
    let header = SnapshotHeader {
        format: "f64-le".into(),
        dim,
        rows: rec.states.len(),
        columns: std::iter::once("t".to_string())
            .chain((1..=dim).map(|l| format!("x_{l}")))
            .collect(),
    };
    let line = serde_json::to_string(&header).map_err(io::Error::other)?;
    writeln!(w, "{line}")?;
    for (t, x) in rec.state_times.iter().zip(&rec.states) {
        w.write_all(&t.to_le_bytes())?;
        for v in x {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads back what [`write_snapshots`] produced.
pub fn read_snapshots<R: BufRead>(mut r: R) -> io::Result<(SnapshotHeader, Vec<(f64, Vec<f64>)>)> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: SnapshotHeader =
        serde_json::from_str(line.trim_end()).map_err(io::Error::other)?;
    let mut rows = Vec::with_capacity(header.rows);
    let mut buf = [0u8; 8];
    for _ in 0..header.rows {
        r.read_exact(&mut buf)?;
        let t = f64::from_le_bytes(buf);
        let mut x = Vec::with_capacity(header.dim);
        for _ in 0..header.dim {
            r.read_exact(&mut buf)?;
            x.push(f64::from_le_bytes(buf));
        }
        rows.push((t, x));
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::Observables;

    #[test]
    fn csv_layout_and_snapshot_round_trip() {
        let mut rec = PathRecorder::new(FlagKind::Good, 0.0);
        rec.push(0.0, Observables { u: 2.0, v: 1.0, t: 3.0 }, true);
        rec.push(0.5, Observables { u: 0.1, v: 0.1, t: 0.1 }, false);
        rec.push_state(0.0, &[1.0, -2.0]);
        rec.push_state(0.5, &[0.25, f64::MIN_POSITIVE]);
        let mut csv = Vec::new();
        write_observables_csv(&rec, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,U,V,T,ratio,good_flag");
        assert_eq!(
            lines[1],
            "0.0000000000000000e0,2.0000000000000000e0,1.0000000000000000e0,3.0000000000000000e0,2.0000000000000000e0,1"
        );
        assert!(text.ends_with('\n'));
        let mut bin = Vec::new();
        write_snapshots(&rec, &mut bin).unwrap();
        let (h, rows) = read_snapshots(io::Cursor::new(bin)).unwrap();
        assert_eq!(h.rows, 2);
        assert_eq!(h.columns, vec!["t", "x_1", "x_2"]);
        assert_eq!(rows[1], (0.5, vec![0.25, f64::MIN_POSITIVE]));
    }
}
