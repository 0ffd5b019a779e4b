//! CSV emission and parsing for averaged traces.

use std::io::{Read, Write};
use std::path::Path;

use geotrack_core::karcher::{AveragedTrace, RunDiagnostics};

use crate::error::{CliError, CliResult};

pub const HEADER: [&str; 9] = [
    "k",
    "e_mean",
    "e_stderr",
    "ebar_mean",
    "reg_track",
    "reg_est",
    "alpha_k",
    "eta_k",
    "VT_cum",
];

pub const SIGNIFICANT_DIGITS: usize = 12;

/// Positional decimal with [`SIGNIFICANT_DIGITS`] significant digits.
pub fn format_number(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let (sign, mantissa) = mantissa
        .strip_prefix('-')
        .map_or(("", mantissa), |m| ("-", m));
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let n = digits.len() as i32;
    let body = if exp >= n - 1 {
        format!("{digits}{}", "0".repeat((exp - n + 1) as usize))
    } else if exp >= 0 {
        let (int, frac) = digits.split_at(exp as usize + 1);
        format!("{int}.{frac}")
    } else {
        format!("0.{}{digits}", "0".repeat((-exp - 1) as usize))
    };
    format!("{sign}{body}")
}

pub fn write_trace<W: Write>(trace: &AveragedTrace, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for k in 0..trace.rows() {
        let mut row = vec![k.to_string()];
        row.extend(
            [
                trace.e_mean[k],
                trace.e_stderr[k],
                trace.ebar_mean[k],
                trace.reg_track[k],
                trace.reg_est[k],
                trace.alpha[k],
                trace.eta[k],
                trace.vt_cum[k],
            ]
            .map(format_number),
        );
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_file(trace: &AveragedTrace, path: &Path) -> CliResult<()> {
    let file = std::fs::File::create(path).map_err(|e| CliError::io(path.display(), e))?;
    write_trace(trace, std::io::BufWriter::new(file))
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn write_diagnostics_file(runs: &[RunDiagnostics], path: &Path) -> CliResult<()> {
    let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record([
        "run",
        "omega",
        "ball_radius",
        "delta_hat",
        "V_hat",
        "G_hat",
        "certified",
    ])
    .map_err(io)?;
    for r in runs {
        w.write_record([
            r.run_index.to_string(),
            format_number(r.omega),
            format_number(r.ball_radius),
            format_number(r.delta_hat),
            format_number(r.v_hat),
            format_number(r.g_hat),
            r.certified.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path.display(), e))
}

/// `(k, e_mean)` pairs of a trace CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub k: Vec<f64>,
    pub e_mean: Vec<f64>,
}

pub fn read_series<R: Read>(label: String, input: R) -> CliResult<Series> {
    let mut r = csv::Reader::from_reader(input);
    let header = r
        .headers()
        .map_err(|e| CliError::Data(format!("{label}: {e}")))?;
    if header.iter().ne(HEADER) {
        return Err(CliError::Data(format!(
            "{label}: unexpected header {header:?}"
        )));
    }
    let mut s = Series {
        label,
        k: Vec::new(),
        e_mean: Vec::new(),
    };
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Data(format!("{}: {e}", s.label)))?;
        let parse = |i: usize| -> CliResult<f64> {
            rec[i].trim().parse::<f64>().map_err(|_| {
                CliError::Data(format!(
                    "{}: row {}: bad number {:?}",
                    s.label,
                    line + 1,
                    &rec[i]
                ))
            })
        };
        let values = (0..HEADER.len())
            .map(parse)
            .collect::<CliResult<Vec<_>>>()?;
        s.k.push(values[0]);
        s.e_mean.push(values[1]);
    }
    if s.k.is_empty() {
        return Err(CliError::Data(format!("{}: no data rows", s.label)));
    }
    Ok(s)
}

pub fn read_series_file(path: &Path) -> CliResult<Series> {
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path.display(), e))?;
    read_series(label, file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use geotrack_core::optimizer::Arm;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(format_number(1.0), "1.00000000000");
        assert_eq!(format_number(123.456), "123.456000000");
        assert_eq!(format_number(-0.0012345678901234), "-0.00123456789012");
        assert_eq!(format_number(1e-7), "0.000000100000000000");
        assert_eq!(format_number(5.7e13), "57000000000000");
        assert_eq!(format_number(123456789012.0), "123456789012");
        assert_eq!(format_number(0.0), "0");
        for v in [0.1, 2.0 / 3.0, 543.7312, 1e-300, 9.99999999999951] {
            let back: f64 = format_number(v).parse().unwrap();
            assert!((back - v).abs() <= 5e-12 * v.abs(), "{v}");
        }
    }

    #[test]
    fn trace_roundtrip() {
        let t = AveragedTrace {
            arm: Arm::ZerothOrder,
            e_mean: vec![1.0, 0.5],
            e_stderr: vec![0.1, 0.05],
            ebar_mean: vec![0.9, 0.4],
            reg_track: vec![0.2, 0.3],
            reg_est: vec![0.1, 0.2],
            alpha: vec![0.01, 0.01],
            eta: vec![0.009, 0.009],
            vt_cum: vec![0.0, 0.001],
        };
        let mut buf = Vec::new();
        write_trace(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text
            .starts_with("k,e_mean,e_stderr,ebar_mean,reg_track,reg_est,alpha_k,eta_k,VT_cum\n"));
        assert_eq!(text.lines().count(), 3);
        let s = read_series("zo".into(), buf.as_slice()).unwrap();
        assert_eq!(s.k, vec![0.0, 1.0]);
        assert_eq!(s.e_mean, vec![1.0, 0.5]);
    }

    #[test]
    fn malformed_input_is_a_data_error() {
        let header = HEADER.join(",");
        for text in [
            header.clone(),
            format!("{header}\n0,x,0,0,0,0,0,0,0\n"),
            "a,b\n1,2\n".to_string(),
            format!("{header}\n0,1,2\n"),
        ] {
            let e = read_series("bad".into(), text.as_bytes()).unwrap_err();
            assert_eq!(e.exit_code(), 4, "{text}");
        }
    }
}
