use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{InputDataset, ModelSpec};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    model_id: String,
    value: f64,
}

/// Reads a `model_id,value` CSV (header required, one observation per row).
pub fn read_dataset_csv<R: Read>(reader: R) -> Result<InputDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut ds = InputDataset::new();
    for (line, row) in rdr.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| Error::Config(format!("dataset row {}: {e}", line + 2)))?;
        ds.push(&row.model_id, row.value);
    }
    Ok(ds)
}

pub fn write_dataset_csv<W: Write>(dataset: &InputDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for (id, values) in dataset.iter() {
        for &value in values {
            w.serialize(Row {
                model_id: id.to_string(),
                value,
            })
            .map_err(|e| Error::Config(e.to_string()))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads the JSON list of model specs.
pub fn read_specs_json<R: Read>(reader: R) -> Result<Vec<ModelSpec>> {
    let specs: Vec<ModelSpec> = serde_json::from_reader(reader)?;
    let mut seen = std::collections::HashSet::new();
    for s in &specs {
        if !seen.insert(s.model_id.as_str()) {
            return Err(Error::Config(format!("duplicate model_id `{}`", s.model_id)));
        }
    }
    Ok(specs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inputs::Family;

    #[test]
    fn csv_round_trip() {
        let text = "model_id,value\na,1.5\nb,0\na,2.5\n";
        let ds = read_dataset_csv(text.as_bytes()).unwrap();
        assert_eq!(ds.get("a"), Some(&[1.5, 2.5][..]));
        let mut out = Vec::new();
        write_dataset_csv(&ds, &mut out).unwrap();
        let again = read_dataset_csv(out.as_slice()).unwrap();
        assert_eq!(ds, again);
    }

    #[test]
    fn specs_parse() {
        let text = r#"[{"model_id":"g","family":"normal"},
                       {"model_id":"k","family":"degenerate","value":3.4},
                       {"model_id":"e","family":"normal_zero_mean"}]"#;
        let specs = read_specs_json(text.as_bytes()).unwrap();
        assert_eq!(specs[1].family, Family::Degenerate { value: 3.4 });
        assert_eq!(specs[2].family, Family::NormalZeroMean);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = r#"[{"model_id":"g","family":"normal"},{"model_id":"g","family":"gamma"}]"#;
        assert!(matches!(read_specs_json(text.as_bytes()), Err(Error::Config(_))));
    }
}
