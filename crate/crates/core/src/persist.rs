//! Model container: the network plus the standardization parameters it was
//! trained with, so a saved model can encode new records on its own.

use std::io::{BufRead, Write};

use crate::data::Scaler;
use crate::nnet::{parse_hex_row, write_hex_row, NetError, Network, Result};

const MAGIC: &str = "cadex-model";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub network: Network,
    pub scaler: Scaler,
}

pub fn save_model(w: &mut impl Write, network: &Network, scaler: &Scaler) -> Result<()> {
    writeln!(w, "{MAGIC} {VERSION}")?;
    writeln!(w, "scaler {}", scaler.mean.len())?;
    write_hex_row(w, "mean", &scaler.mean)?;
    write_hex_row(w, "std", &scaler.std)?;
    network.save(w)?;
    Ok(())
}

pub fn load_model(r: &mut impl BufRead) -> Result<SavedModel> {
    let mut line = String::new();
    let mut next = |r: &mut dyn BufRead| -> Result<String> {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(NetError::Format("unexpected end of file".into()));
        }
        Ok(line.trim_end().to_string())
    };
    match next(r)?.split_whitespace().collect::<Vec<_>>()[..] {
        [MAGIC, v] if v == VERSION.to_string() => {}
        [MAGIC, v] => return Err(NetError::Format(format!("unsupported model version {v}"))),
        _ => return Err(NetError::Format("not a cadex model file".into())),
    }
    let width: usize = next(r)?
        .strip_prefix("scaler ")
        .and_then(|n| n.trim().parse().ok())
        .ok_or_else(|| NetError::Format("bad scaler header".into()))?;
    let mean = parse_hex_row(&next(r)?, "mean", width)?;
    let std = parse_hex_row(&next(r)?, "std", width)?;
    let network = Network::load(r)?;
    if network.input_width() != width {
        return Err(NetError::Format(format!(
            "scaler width {width} does not match network input {}",
            network.input_width()
        )));
    }
    Ok(SavedModel {
        network,
        scaler: Scaler { mean, std },
    })
}
