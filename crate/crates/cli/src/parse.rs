//! Value parsers for list- and range-valued flags.

use std::str::FromStr;

fn floats(s: &str, n: usize) -> Result<Vec<f64>, String> {
    let v: Vec<f64> =
        s.split(',').map(|t| f64::from_str(t.trim()).map_err(|e| format!("'{t}': {e}"))).collect::<Result<_, _>>()?;
    if v.len() != n {
        return Err(format!("expected {n} comma-separated numbers, got {}", v.len()));
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params6(pub [f64; 6]);

impl FromStr for Params6 {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let v = floats(s, 6)?;
        Ok(Params6([v[0], v[1], v[2], v[3], v[4], v[5]]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triple(pub [f64; 3]);

impl FromStr for Triple {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let v = floats(s, 3)?;
        Ok(Triple([v[0], v[1], v[2]]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair(pub [f64; 2]);

impl FromStr for Pair {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let v = floats(s, 2)?;
        Ok(Pair([v[0], v[1]]))
    }
}

/// Semicolon-separated list of `x1,x3` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PairList(pub Vec<[f64; 2]>);

impl FromStr for PairList {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let v = s
            .split(';')
            .filter(|t| !t.trim().is_empty())
            .map(|t| Pair::from_str(t).map(|p| p.0))
            .collect::<Result<Vec<_>, _>>()?;
        if v.is_empty() {
            return Err("expected at least one x1,x3 pair".into());
        }
        Ok(PairList(v))
    }
}

/// `lo:hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range(pub f64, pub f64);

impl FromStr for Range {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s.split_once(':').ok_or("expected lo:hi")?;
        let lo = f64::from_str(a.trim()).map_err(|e| e.to_string())?;
        let hi = f64::from_str(b.trim()).map_err(|e| e.to_string())?;
        if !(lo < hi) {
            return Err("range needs lo < hi".into());
        }
        Ok(Range(lo, hi))
    }
}

/// `lo:hi:steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid(pub f64, pub f64, pub usize);

impl FromStr for Grid {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err("expected lo:hi:steps".into());
        }
        let lo = f64::from_str(parts[0].trim()).map_err(|e| e.to_string())?;
        let hi = f64::from_str(parts[1].trim()).map_err(|e| e.to_string())?;
        let steps = usize::from_str(parts[2].trim()).map_err(|e| e.to_string())?;
        if !(lo <= hi) {
            return Err("grid needs lo <= hi".into());
        }
        Ok(Grid(lo, hi, steps))
    }
}
