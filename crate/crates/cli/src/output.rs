use std::io::IsTerminal;

use lmscale::runstore::fmt_num;

pub const RED: &str = "31";
pub const GREEN: &str = "32";
pub const YELLOW: &str = "33";

/// True when `NO_COLOR` is set to a non-empty value.
pub fn no_color() -> bool {
    std::env::var_os("NO_COLOR").is_some_and(|v| !v.is_empty())
}

fn paint(text: &str, code: &str, tty: bool) -> String {
    if tty && !no_color() {
        format!("\x1b[{code}m{text}\x1b[0m")
    } else {
        text.to_string()
    }
}

pub fn paint_stdout(text: &str, code: &str) -> String {
    paint(text, code, std::io::stdout().is_terminal())
}

pub fn paint_stderr(text: &str, code: &str) -> String {
    paint(text, code, std::io::stderr().is_terminal())
}

pub fn warn(message: &str) {
    eprintln!("{} {message}", paint_stderr("warning:", YELLOW));
}

/// `key  value` lines with keys padded to a common width.
pub fn print_fields(fields: &[(&str, String)]) {
    let width = fields.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    for (k, v) in fields {
        println!("{k:<width$}  {v}");
    }
}

pub fn num(v: f64) -> String {
    fmt_num(v)
}

/// Plain-text table with left-aligned columns.
pub fn print_table(header: &[&str], rows: &[Vec<String>]) {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        println!("{}", parts.join("  ").trim_end());
    };
    line(header.to_vec());
    for row in rows {
        line(row.iter().map(String::as_str).collect());
    }
}
