//! Fixed-layout CSV output. Numbers are written as `{:.16e}`, which
//! round-trips every double; missing values are empty fields.

use psos_core::extremality::ExtremalityReport;
use psos_core::law::LawPoint;
use psos_core::spectral::TransitionKernel;
use serde::Serialize;

pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub struct Table {
    buf: String,
    width: usize,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        let mut buf = header.join(",");
        buf.push('\n');
        Table { buf, width: header.len() }
    }

    pub fn row(&mut self, fields: Vec<String>) {
        assert_eq!(fields.len(), self.width, "row width does not match header");
        self.buf.push_str(&fields.join(","));
        self.buf.push('\n');
    }

    pub fn finish(self) -> String {
        self.buf
    }
}

pub const SCAN_HEADER: &[&str] = &[
    "theta", "p", "branch", "exists", "x", "y", "lambda1", "lambda2", "eta", "kappa", "gamma_bound", "U", "verdict",
];

#[derive(Debug, Clone, Serialize)]
pub struct ScanRow {
    pub theta: f64,
    pub p: f64,
    pub branch: u8,
    pub exists: bool,
    pub x: Option<f64>,
    pub y: Option<f64>,
    pub lambda1: Option<f64>,
    pub lambda2: Option<f64>,
    pub eta: Option<f64>,
    pub kappa: Option<f64>,
    pub gamma_bound: Option<f64>,
    #[serde(rename = "U")]
    pub u: Option<f64>,
    pub verdict: Option<String>,
}

impl ScanRow {
    pub fn new(theta: f64, p: f64, branch: u8, found: Option<(&LawPoint, &TransitionKernel, &ExtremalityReport)>) -> Self {
        match found {
            Some((pt, kernel, r)) => ScanRow {
                theta,
                p,
                branch,
                exists: true,
                x: Some(pt.x),
                y: Some(pt.y),
                lambda1: Some(kernel.lambda1()),
                lambda2: Some(kernel.lambda2()),
                eta: Some(r.eta),
                kappa: Some(r.kappa),
                gamma_bound: Some(r.gamma_bound),
                u: Some(r.u),
                verdict: Some(r.verdict.label().to_string()),
            },
            None => ScanRow {
                theta,
                p,
                branch,
                exists: false,
                x: None,
                y: None,
                lambda1: None,
                lambda2: None,
                eta: None,
                kappa: None,
                gamma_bound: None,
                u: None,
                verdict: None,
            },
        }
    }

    pub fn fields(&self) -> Vec<String> {
        vec![
            num(self.theta),
            num(self.p),
            self.branch.to_string(),
            self.exists.to_string(),
            opt_num(self.x),
            opt_num(self.y),
            opt_num(self.lambda1),
            opt_num(self.lambda2),
            opt_num(self.eta),
            opt_num(self.kappa),
            opt_num(self.gamma_bound),
            opt_num(self.u),
            self.verdict.clone().unwrap_or_default(),
        ]
    }
}
