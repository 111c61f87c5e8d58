pub mod geodesic;
pub mod reconstruct;
pub mod simulate;
pub mod solve;

/// What a command has to say on the terminal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub summary: String,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn new(summary: String) -> Self {
        Self { summary, warnings: Vec::new() }
    }
}

/// Parses a positive count written as an integer or in exponent form.
pub fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(n) = s.parse::<u64>() {
        return if n > 0 { Ok(n) } else { Err("count must be positive".into()) };
    }
    let x: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if x >= 1.0 && x.fract() == 0.0 && x <= u64::MAX as f64 {
        Ok(x as u64)
    } else {
        Err(format!("{s:?} is not a positive whole number"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        assert_eq!(parse_count("1e6"), Ok(1_000_000));
        assert_eq!(parse_count("2.5E3"), Ok(2500));
        assert_eq!(parse_count("17"), Ok(17));
        assert!(parse_count("0").is_err());
        assert!(parse_count("1.5").is_err());
        assert!(parse_count("-3").is_err());
        assert!(parse_count("many").is_err());
    }
}
