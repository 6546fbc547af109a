//! On-disk formats. JSON documents carry a `schema_version`; CSV files open
//! with a `# kelly-<kind> v<version>` line. All writes go through a temporary
//! file and a rename so a crash never leaves a half-written file behind.

use std::io::Write;
use std::path::{Path, PathBuf};

use kelly_core::{bet_from_contract, Bet, Calibration, Contract, ProblemInstance, Regime, VarianceLevel};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = std::fs::File::create(&tmp).map_err(CliError::io(&tmp))?;
        f.write_all(bytes).map_err(CliError::io(&tmp))?;
        f.sync_all().map_err(CliError::io(&tmp))?;
    }
    std::fs::rename(&tmp, path).map_err(CliError::io(path))
}

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("serializable value");
    v.push(b'\n');
    v
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &to_json(value))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::format(path, e))
}

fn csv_header(kind: &str) -> String {
    format!("# kelly-{kind} v{SCHEMA_VERSION}\n")
}

pub fn csv_bytes<T: Serialize>(kind: &str, rows: &[T]) -> Result<Vec<u8>> {
    let mut out = csv_header(kind).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        for r in rows {
            w.serialize(r).map_err(|e| CliError::Usage(format!("csv encoding failed: {e}")))?;
        }
        w.flush().map_err(CliError::io("<csv buffer>"))?;
    }
    Ok(out)
}

pub fn write_csv<T: Serialize>(path: &Path, kind: &str, rows: &[T]) -> Result<()> {
    write_atomic(path, &csv_bytes(kind, rows)?)
}

pub fn read_csv<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let expected = csv_header(kind);
    if !text.starts_with(&expected) {
        let first = text.lines().next().unwrap_or("");
        return Err(CliError::format(path, format!("expected header `{}`, found `{first}`", expected.trim_end())));
    }
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(|e| CliError::format(path, e))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceMetadata {
    pub regime: Regime,
    pub variance_level: VarianceLevel,
    pub seed: u64,
    pub index: u64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<Calibration>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub schema_version: u32,
    pub metadata: InstanceMetadata,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contracts: Option<Vec<Contract>>,
    pub bets: Vec<Bet>,
}

impl From<&ProblemInstance> for InstanceFile {
    fn from(inst: &ProblemInstance) -> Self {
        InstanceFile {
            schema_version: SCHEMA_VERSION,
            metadata: InstanceMetadata {
                regime: inst.regime,
                variance_level: inst.variance_level,
                seed: inst.seed,
                index: inst.index,
                n: inst.n(),
                calibration: inst.calibration,
            },
            contracts: inst.contracts.clone(),
            bets: inst.bets.clone(),
        }
    }
}

impl InstanceFile {
    pub fn into_instance(self, path: &Path) -> Result<ProblemInstance> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::format(
                path,
                format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        if self.metadata.n != self.bets.len() {
            return Err(CliError::format(path, format!("metadata.N is {} but bets has {} entries", self.metadata.n, self.bets.len())));
        }
        if let Some(cs) = &self.contracts {
            for (i, (c, b)) in cs.iter().zip(&self.bets).enumerate() {
                if bet_from_contract(c) != Some(*b) {
                    return Err(CliError::format(path, format!("bets[{i}] does not match contracts[{i}]")));
                }
            }
        }
        let inst = ProblemInstance {
            bets: self.bets,
            regime: self.metadata.regime,
            variance_level: self.metadata.variance_level,
            seed: self.metadata.seed,
            index: self.metadata.index,
            contracts: self.contracts,
            calibration: self.metadata.calibration,
        };
        inst.validate().map_err(|e| CliError::format(path, e))?;
        Ok(inst)
    }
}

pub fn load_instance(path: &Path) -> Result<ProblemInstance> {
    read_json::<InstanceFile>(path)?.into_instance(path)
}

pub fn save_instance(path: &Path, inst: &ProblemInstance) -> Result<()> {
    write_json(path, &InstanceFile::from(inst))
}

/// One row of `manifest.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub path: String,
    pub regime: Regime,
    pub variance_level: VarianceLevel,
    #[serde(rename = "N")]
    pub n: usize,
    pub index: u64,
    pub seed: u64,
    pub kappa: Option<f64>,
}

pub fn read_manifest(out: &Path) -> Result<Vec<ManifestRow>> {
    let path = out.join("manifest.csv");
    if !path.exists() {
        return Err(CliError::Usage(format!("no manifest at {}; run `kelly gen` first", path.display())));
    }
    read_csv(&path, "manifest")
}

#[cfg(test)]
mod tests {
    use super::*;
    use kelly_core::datagen::gen_instance;

    #[test]
    fn instance_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let inst = gen_instance(Regime::Gnd6, VarianceLevel::High, 25, 9, 4, None).unwrap();
        let path = dir.path().join("a/b.json");
        save_instance(&path, &inst).unwrap();
        let back = load_instance(&path).unwrap();
        assert_eq!(back, inst);
        for (a, b) in back.bets.iter().zip(&inst.bets) {
            assert_eq!(a.p.to_bits(), b.p.to_bits());
            assert_eq!(a.b.to_bits(), b.b.to_bits());
        }
        let beta = gen_instance(Regime::Beta, VarianceLevel::Low, 5, 9, 4, Some(300.0)).unwrap();
        save_instance(&path, &beta).unwrap();
        assert_eq!(load_instance(&path).unwrap(), beta);
    }

    #[test]
    fn malformed_instances_name_the_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.json");
        let inst = gen_instance(Regime::Normal, VarianceLevel::Low, 3, 1, 0, None).unwrap();
        let mut doc = serde_json::to_value(InstanceFile::from(&inst)).unwrap();

        doc["schema_version"] = 2.into();
        std::fs::write(&path, doc.to_string()).unwrap();
        assert!(load_instance(&path).unwrap_err().to_string().contains("schema_version"));

        doc["schema_version"] = 1.into();
        doc["bets"][1]["p"] = 1.5.into();
        std::fs::write(&path, doc.to_string()).unwrap();
        assert!(load_instance(&path).unwrap_err().to_string().contains("bets[1]"));

        doc.as_object_mut().unwrap().remove("bets");
        std::fs::write(&path, doc.to_string()).unwrap();
        let e = load_instance(&path).unwrap_err();
        assert!(e.to_string().contains("bets"), "{e}");
        assert_eq!(e.exit_code(), 1);
    }

    #[test]
    fn csv_round_trip_with_header() {
        #[derive(Debug, PartialEq, Serialize, Deserialize)]
        struct Row {
            a: f64,
            b: String,
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let rows = vec![Row { a: 0.1 + 0.2, b: "x".into() }, Row { a: 1e-300, b: "y;z".into() }];
        write_csv(&path, "test", &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# kelly-test v1\n"));
        assert_eq!(read_csv::<Row>(&path, "test").unwrap(), rows);
        assert!(read_csv::<Row>(&path, "other").is_err());
    }
}
