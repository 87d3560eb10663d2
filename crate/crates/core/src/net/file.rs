//! JSON network definition.
//!
//! ```json
//! {
//!   "s_base_kva": 100,
//!   "buses": [{ "id": "MV", "base_kv": 10, "kind": "slack" }, ...],
//!   "branches": [
//!     { "id": "T1", "from": "MV", "to": "B007", "kind": "transformer",
//!       "r_ohm": 0.0077, "x_ohm": 0.0244, "rating_kva": 250,
//!       "tap": { "position": 5, "neutral": 4, "step": 0.025, "min": 1, "max": 9 } },
//!     { "id": "L1", "from": "B008", "to": "B007", "kind": "cable",
//!       "cable": "NAYY 4x150 SE", "length_m": 400 }
//!   ]
//! }
//! ```
//!
//! Cable branches either name a catalog type plus a length in meters or give
//! `r_ohm`/`x_ohm` directly. `rating_kva` overrides the catalog rating.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{catalog, Branch, BranchKind, Bus, NetError, Network, TapChanger, S_BASE_KVA};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkFile {
    #[serde(default = "default_s_base")]
    pub s_base_kva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<BranchEntry>,
}

fn default_s_base() -> f64 {
    S_BASE_KVA
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BranchEntry {
    Cable {
        id: String,
        from: String,
        to: String,
        #[serde(default)]
        cable: Option<String>,
        #[serde(default)]
        length_m: Option<f64>,
        #[serde(default)]
        r_ohm: Option<f64>,
        #[serde(default)]
        x_ohm: Option<f64>,
        #[serde(default)]
        b_siemens: Option<f64>,
        #[serde(default)]
        rating_kva: Option<f64>,
    },
    Transformer {
        id: String,
        from: String,
        to: String,
        r_ohm: f64,
        x_ohm: f64,
        rating_kva: f64,
        tap: TapChanger,
    },
}

impl BranchEntry {
    fn resolve(self) -> Result<Branch, NetError> {
        match self {
            BranchEntry::Transformer {
                id,
                from,
                to,
                r_ohm,
                x_ohm,
                rating_kva,
                tap,
            } => Ok(Branch {
                id,
                from,
                to,
                r_ohm,
                x_ohm,
                b_siemens: 0.0,
                rating_kva,
                kind: BranchKind::Transformer { tap },
            }),
            BranchEntry::Cable {
                id,
                from,
                to,
                cable,
                length_m,
                r_ohm,
                x_ohm,
                b_siemens,
                rating_kva,
            } => {
                let (r, x, b, rating) = match (cable, r_ohm, x_ohm) {
                    (Some(name), None, None) => {
                        let ty = catalog::lookup(&name).ok_or(NetError::UnknownCable(name))?;
                        let len = length_m.ok_or_else(|| {
                            NetError::File(format!("cable branch `{id}` needs length_m"))
                        })?;
                        if !(len > 0.0) {
                            return Err(NetError::File(format!(
                                "cable branch `{id}` has non-positive length {len}"
                            )));
                        }
                        let km = len / 1000.0;
                        (
                            ty.r_ohm_per_km * km,
                            ty.x_ohm_per_km * km,
                            ty.b_us_per_km * 1e-6 * km,
                            ty.rating_kva(),
                        )
                    }
                    (None, Some(r), Some(x)) => {
                        let rating = rating_kva.ok_or_else(|| {
                            NetError::File(format!("branch `{id}` needs rating_kva"))
                        })?;
                        (r, x, b_siemens.unwrap_or(0.0), rating)
                    }
                    _ => {
                        return Err(NetError::File(format!(
                            "branch `{id}`: give either `cable` + `length_m` or `r_ohm` + `x_ohm`"
                        )))
                    }
                };
                Ok(Branch {
                    id,
                    from,
                    to,
                    r_ohm: r,
                    x_ohm: x,
                    b_siemens: b_siemens.unwrap_or(b),
                    rating_kva: rating_kva.unwrap_or(rating),
                    kind: BranchKind::Cable,
                })
            }
        }
    }
}

impl NetworkFile {
    pub fn into_network(self) -> Result<Network, NetError> {
        let branches = self
            .branches
            .into_iter()
            .map(BranchEntry::resolve)
            .collect::<Result<Vec<_>, _>>()?;
        Network::new(self.buses, branches, self.s_base_kva)
    }
}

pub fn parse_network(json: &str) -> Result<Network, NetError> {
    let file: NetworkFile = serde_json::from_str(json).map_err(|e| NetError::File(e.to_string()))?;
    file.into_network()
}

pub fn load_network(path: &Path) -> Result<Network, NetError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| NetError::File(format!("{}: {e}", path.display())))?;
    parse_network(&text)
}
