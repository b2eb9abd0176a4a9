//! Report rows and their markdown and CSV renderings.

/// Four significant digits, fixed notation.
pub fn sig4(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let decimals = |v: f64| (3 - v.abs().log10().floor() as i32).max(0) as usize;
    let d = decimals(x);
    let s = format!("{x:.d$}");
    // rounding can carry into the next power of ten (9.99996 → 10.000)
    let rounded: f64 = s.parse().unwrap_or(x);
    let d2 = decimals(rounded);
    if rounded != 0.0 && d2 < d {
        format!("{x:.d2$}")
    } else {
        s
    }
}

/// Shortest round-trip representation, in exponent form for tiny or huge
/// magnitudes.
pub fn full_precision(x: f64) -> String {
    if x != 0.0 && x.is_finite() && !(1e-5..1e16).contains(&x.abs()) {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}

pub fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.10 {
        "*"
    } else {
        ""
    }
}

#[derive(Debug, Clone)]
pub enum Value {
    /// Estimate with standard error and two-sided normal p-value.
    Coefficient { estimate: f64, se: Option<f64>, p: Option<f64> },
    Statistic(f64),
    PValue(f64),
    Count(usize),
    Text(String),
}

#[derive(Debug, Clone)]
pub struct Row {
    pub section: String,
    pub term: String,
    pub value: Value,
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub title: String,
    pub rows: Vec<Row>,
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(title: impl Into<String>) -> Self {
        Self { title: title.into(), ..Self::default() }
    }

    pub fn push(&mut self, section: &str, term: impl Into<String>, value: Value) {
        self.rows.push(Row { section: section.into(), term: term.into(), value });
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!("| | {} |\n|---|---|\n", self.title);
        let mut current = None;
        for row in &self.rows {
            if current != Some(&row.section) {
                if !row.section.is_empty() {
                    out.push_str(&format!("| **{}** | |\n", row.section));
                }
                current = Some(&row.section);
            }
            match &row.value {
                Value::Coefficient { estimate, se, p } => {
                    let s = p.map_or("", stars);
                    out.push_str(&format!("| {} | {}{s} |\n", row.term, sig4(*estimate)));
                    if let Some(se) = se {
                        out.push_str(&format!("| | ({}) |\n", sig4(*se)));
                    }
                }
                Value::Statistic(v) => out.push_str(&format!("| {} | {} |\n", row.term, sig4(*v))),
                Value::PValue(v) => out.push_str(&format!("| {} | {v:.3} |\n", row.term)),
                Value::Count(n) => out.push_str(&format!("| {} | {n} |\n", row.term)),
                Value::Text(t) => out.push_str(&format!("| {} | {t} |\n", row.term)),
            }
        }
        if !self.notes.is_empty() {
            out.push('\n');
            for n in &self.notes {
                out.push_str(&format!("{n}\n"));
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["section", "term", "estimate", "se", "p_value", "text"]).expect("in-memory write");
        let num = |v: Option<f64>| v.map(full_precision).unwrap_or_default();
        for row in &self.rows {
            let (e, s, p, t) = match &row.value {
                Value::Coefficient { estimate, se, p } => (Some(*estimate), *se, *p, String::new()),
                Value::Statistic(v) => (Some(*v), None, None, String::new()),
                Value::PValue(v) => (None, None, Some(*v), String::new()),
                Value::Count(n) => (Some(*n as f64), None, None, String::new()),
                Value::Text(t) => (None, None, None, t.clone()),
            };
            w.write_record([row.section.clone(), row.term.clone(), num(e), num(s), num(p), t]).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }
}
