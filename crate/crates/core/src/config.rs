//! `key = value` configuration files.
//!
//! Every [`Params`] field may be set, plus `method` (`topol`, `thresh` or
//! `oracle`) and `kappa`. Blank lines and `#` comments are ignored; unknown
//! keys are an error. Missing keys keep their defaults.

use std::path::Path;

use crate::error::{Error, Result};
use crate::params::Params;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConfigFile {
    pub params: Params,
    pub method: Option<String>,
    pub kappa: Option<f64>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ConfigFile::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("config line {}: expected key = value", n + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "method" => match value {
                    "topol" | "thresh" | "oracle" => cfg.method = Some(value.to_string()),
                    other => {
                        return Err(Error::Parse(format!(
                            "config line {}: unknown method {other:?}",
                            n + 1
                        )))
                    }
                },
                _ => {
                    let v: f64 = value.parse().map_err(|_| {
                        Error::Parse(format!("config line {}: {key} is not a number: {value:?}", n + 1))
                    })?;
                    if key == "kappa" {
                        cfg.kappa = Some(v);
                    } else {
                        cfg.params.set(key, v).map_err(|e| match e {
                            Error::InvalidParam(msg) => {
                                Error::Parse(format!("config line {}: {msg}", n + 1))
                            }
                            other => other,
                        })?;
                    }
                }
            }
        }
        cfg.params.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_when_empty() {
        let cfg = ConfigFile::parse("# nothing\n\n").unwrap();
        assert_eq!(cfg.params, Params::default());
        assert_eq!(cfg.method, None);
    }

    #[test]
    fn overrides() {
        let cfg = ConfigFile::parse(
            "sigma_v = 0.3\nepsilon=55 # tighter\nmethod = thresh\nkappa = 4900\ncrop_rows = 80\n",
        )
        .unwrap();
        assert_eq!(cfg.params.sigma_v, 0.3);
        assert_eq!(cfg.params.epsilon, 55.0);
        assert_eq!(cfg.params.crop_rows, 80);
        assert_eq!(cfg.method.as_deref(), Some("thresh"));
        assert_eq!(cfg.kappa, Some(4900.0));
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(ConfigFile::parse("alpha = 2").is_err());
        assert!(ConfigFile::parse("epsilon 60").is_err());
        assert!(ConfigFile::parse("epsilon = sixty").is_err());
        assert!(ConfigFile::parse("method = vgg16").is_err());
        assert!(ConfigFile::parse("tau = 0").is_err());
    }
}
