//! Report emission in human-readable or line-oriented machine form.

use std::fmt::{self, Display};

use clap::ValueEnum;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Machine,
}

/// An ordered list of fields. The first is always the verdict or main
/// result; bounds are added by the command that produced it.
#[derive(Clone, Debug)]
pub struct Report {
    command: &'static str,
    fields: Vec<(String, String)>,
}

impl Report {
    pub fn new(command: &'static str) -> Report {
        Report { command, fields: Vec::new() }
    }

    pub fn field(&mut self, key: &str, value: impl Display) -> &mut Report {
        self.fields.push((key.to_string(), value.to_string()));
        self
    }

    pub fn list<T: Display>(&mut self, key: &str, values: impl IntoIterator<Item = T>) -> &mut Report {
        let mut n = 0;
        for v in values {
            self.field(key, v);
            n += 1;
        }
        if n == 0 {
            self.field(key, "none");
        }
        self
    }

    pub fn render(&self, format: Format) -> String {
        let mut out = String::new();
        match format {
            Format::Text => {
                let width = self.fields.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
                for (k, v) in &self.fields {
                    out.push_str(&format!("{k:width$}  {v}\n"));
                }
            }
            Format::Machine => {
                for (k, v) in &self.fields {
                    out.push_str(&format!("{}.{}\t{}\n", self.command, k, escape(v)));
                }
            }
        }
        out
    }
}

impl Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(Format::Text))
    }
}

fn escape(v: &str) -> String {
    v.replace('\\', "\\\\").replace('\t', "\\t").replace('\n', "\\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn machine_lines_are_prefixed_and_escaped() {
        let mut r = Report::new("member");
        r.field("verdict", "member").field("term", "\\x.x");
        r.list::<&str>("judgment", []);
        assert_eq!(r.render(Format::Machine), "member.verdict\tmember\nmember.term\t\\\\x.x\nmember.judgment\tnone\n");
        assert!(r.render(Format::Text).starts_with("verdict   member\n"));
    }
}
