use std::path::PathBuf;

use wincel_core::embed::{FileEncoder, PseudoEncoder, TextEncoder, MIN_PSEUDO_DIM};
use wincel_core::linalg::l2_normalize;

use crate::args::ProviderArgs;
use crate::failure::{require_file, CmdResult, Failure};
use crate::settings::{set, ProviderSettings};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderSpec {
    Pseudo,
    File(PathBuf),
}

impl std::str::FromStr for ProviderSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "pseudo" {
            return Ok(ProviderSpec::Pseudo);
        }
        match s.strip_prefix("file:") {
            Some(p) if !p.is_empty() => Ok(ProviderSpec::File(PathBuf::from(p))),
            _ => Err(format!("unknown provider {s:?} (expected `pseudo` or `file:<path>`)")),
        }
    }
}

/// Normalizes every embedding the inner encoder returns.
pub struct UnitEncoder(Box<dyn TextEncoder>);

impl TextEncoder for UnitEncoder {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn embed(&self, text: &str) -> wincel_core::Result<Vec<f64>> {
        l2_normalize(&self.0.embed(text)?).unit()
    }
}

pub fn resolve(base: ProviderSettings, args: &ProviderArgs) -> ProviderSettings {
    let mut p = base;
    set(&mut p.provider, args.provider.clone());
    set(&mut p.text_dim, args.text_dim);
    set(&mut p.pseudo_seed, args.pseudo_seed);
    p
}

pub fn open(settings: &ProviderSettings) -> CmdResult<UnitEncoder> {
    let spec: ProviderSpec = settings.provider.parse().map_err(Failure::validation)?;
    let inner: Box<dyn TextEncoder> = match spec {
        ProviderSpec::Pseudo => {
            if settings.text_dim < MIN_PSEUDO_DIM {
                return Err(Failure::validation(format!(
                    "pseudo embeddings need --text-dim of at least {MIN_PSEUDO_DIM}"
                )));
            }
            Box::new(PseudoEncoder::new(settings.text_dim, settings.pseudo_seed))
        }
        ProviderSpec::File(path) => {
            require_file(&path, "embedding file")?;
            Box::new(FileEncoder::open(&path)?)
        }
    };
    Ok(UnitEncoder(inner))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_parsing() {
        assert_eq!("pseudo".parse::<ProviderSpec>().unwrap(), ProviderSpec::Pseudo);
        assert_eq!("file:a/b.eemb".parse::<ProviderSpec>().unwrap(), ProviderSpec::File("a/b.eemb".into()));
        assert!("file:".parse::<ProviderSpec>().is_err());
        assert!("clip".parse::<ProviderSpec>().is_err());
    }

    #[test]
    fn pseudo_output_is_unit() {
        let enc = open(&ProviderSettings::default()).unwrap();
        let v = enc.embed("wet meadow").unwrap();
        let n: f64 = v.iter().map(|x| x * x).sum();
        assert!((n - 1.0).abs() < 1e-12);
    }
}
