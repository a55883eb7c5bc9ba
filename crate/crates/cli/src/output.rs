//! Deterministic CSV rendering and the optional gnuplot script.

use std::fmt::Write as _;

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

/// 17 significant digits in scientific notation, `.` as decimal separator.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.16e}")
    }
}

#[derive(Clone, Debug, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// Comment lines written after the data.
    pub footer: Vec<String>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new(), footer: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Header comments, the column line, the rows and the footer, each line
    /// ending in `\n`.
    pub fn render(&self, header: &[String]) -> String {
        let mut out = String::new();
        for line in header {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Num(x) => format_number(*x),
                    Cell::Text(s) => s.clone(),
                })
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        for line in &self.footer {
            let _ = writeln!(out, "# {line}");
        }
        out
    }
}

/// Header block: program version, subcommand and the full configuration.
pub fn header(command: &str, config_toml: &str) -> Vec<String> {
    let mut lines = vec![
        format!("delaynet {}", env!("CARGO_PKG_VERSION")),
        format!("command: {command}"),
        "units: times in 1/gamma, rates and detunings in gamma".to_string(),
        "config:".to_string(),
    ];
    lines.extend(config_toml.lines().map(|l| format!("  {l}")));
    lines
}

/// A gnuplot script plotting the `y` columns of `csv` against the `x` column.
pub fn plot_script(csv: &str, title: &str, columns: &[String], x: usize, ys: &[usize]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set datafile commentschars '#'");
    let _ = writeln!(s, "set title '{title}'");
    let _ = writeln!(s, "set xlabel '{}'", columns[x]);
    let _ = writeln!(s, "set key outside");
    let parts: Vec<String> =
        ys.iter().map(|&y| format!("'{csv}' every ::1 using {}:{} with lines title '{}'", x + 1, y + 1, columns[y])).collect();
    let _ = writeln!(s, "plot {}", parts.join(", \\\n     "));
    let _ = writeln!(s, "pause mouse close");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_have_seventeen_digits() {
        assert_eq!(format_number(0.1), "1.0000000000000001e-1");
        assert_eq!(format_number(-2.5), "-2.5000000000000000e0");
        assert_eq!(format_number(f64::NAN), "nan");
        let x = 1.0f64 / 7.0;
        assert_eq!(format_number(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn render_layout() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec![1.0.into(), "ok".into()]);
        t.footer.push("done".into());
        assert_eq!(t.render(&["x".to_string()]), "# x\na,b\n1.0000000000000000e0,ok\n# done\n");
    }
}
