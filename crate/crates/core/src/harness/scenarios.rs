//! Line-delimited JSON scenario files.
//!
//! One scenario per line:
//! `{"version":1,"setup":{...},"z":[...],"provenance":null}`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::falsification::training::random_scenario;
use crate::falsification::{Scenario, SetupDistribution};

pub const SCENARIO_FORMAT_VERSION: u32 = 1;

#[derive(Serialize)]
struct RecordRef<'a> {
    version: u32,
    #[serde(flatten)]
    scenario: &'a Scenario,
}

#[derive(Deserialize)]
struct Record {
    version: u32,
    #[serde(flatten)]
    scenario: Scenario,
}

pub fn write_scenarios<W: Write>(mut w: W, scenarios: &[Scenario]) -> Result<(), HarnessError> {
    for scenario in scenarios {
        let line = serde_json::to_string(&RecordRef { version: SCENARIO_FORMAT_VERSION, scenario })
            .map_err(|source| HarnessError::Json { line: 0, source })?;
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scenarios<R: BufRead>(r: R) -> Result<Vec<Scenario>, HarnessError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|source| HarnessError::Json { line: i + 1, source })?;
        if rec.version != SCENARIO_FORMAT_VERSION {
            return Err(HarnessError::Format(format!("line {}: unsupported scenario version {}", i + 1, rec.version)));
        }
        if rec.scenario.z.len() % 2 != 0 {
            return Err(HarnessError::Format(format!("line {}: decision vector has odd length", i + 1)));
        }
        out.push(rec.scenario);
    }
    Ok(out)
}

pub fn save_scenarios(path: &Path, scenarios: &[Scenario]) -> Result<(), HarnessError> {
    write_scenarios(BufWriter::new(File::create(path)?), scenarios)
}

pub fn load_scenarios(path: &Path) -> Result<Vec<Scenario>, HarnessError> {
    read_scenarios(BufReader::new(File::open(path)?))
}

/// `n` random scenarios with decision vectors `z ~ N(0, sigma^2 I)`,
/// reproducible from `seed`.
pub fn generate_test_set(
    n: usize,
    seed: u64,
    setups: &SetupDistribution,
    steps: usize,
    sigma: f64,
) -> Result<Vec<Scenario>, HarnessError> {
    if n == 0 {
        return Err(HarnessError::Empty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| Ok(random_scenario(setups, steps, sigma, &mut rng)?)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::falsification::ScenarioProvenance;

    fn set(seed: u64) -> Vec<Scenario> {
        generate_test_set(20, seed, &SetupDistribution::default(), 100, 0.05).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let mut scenarios = set(1);
        scenarios[3].provenance = Some(ScenarioProvenance { round: 2, objective: -1.5, vacuous: false });
        let mut buf = Vec::new();
        write_scenarios(&mut buf, &scenarios).unwrap();
        assert_eq!(read_scenarios(buf.as_slice()).unwrap(), scenarios);
        assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), 20);
    }

    #[test]
    fn same_seed_same_bytes() {
        let (mut a, mut b) = (Vec::new(), Vec::new());
        write_scenarios(&mut a, &set(9)).unwrap();
        write_scenarios(&mut b, &set(9)).unwrap();
        assert_eq!(a, b);
        let mut c = Vec::new();
        write_scenarios(&mut c, &set(10)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn records_carry_version() {
        let mut buf = Vec::new();
        write_scenarios(&mut buf, &set(1)[..1]).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["version"], 1);
        assert_eq!(v["z"].as_array().unwrap().len(), 200);
    }

    #[test]
    fn bad_input_is_rejected() {
        let mut buf = Vec::new();
        write_scenarios(&mut buf, &set(1)[..1]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let wrong_version = text.replacen("\"version\":1", "\"version\":7", 1);
        assert!(matches!(read_scenarios(wrong_version.as_bytes()), Err(HarnessError::Format(_))));
        assert!(matches!(read_scenarios("{not json}\n".as_bytes()), Err(HarnessError::Json { line: 1, .. })));
        assert!(read_scenarios("".as_bytes()).unwrap().is_empty());
        assert!(matches!(generate_test_set(0, 1, &SetupDistribution::default(), 100, 0.05), Err(HarnessError::Empty)));
    }
}
