pub mod eval;
pub mod finetune;
pub mod gtd_oracle;
pub mod pretrain;
pub mod synth;

use disgcmae::error::{Error, Result};
use std::path::Path;

pub(crate) fn write_text(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|e| Error::io(path, e))
}
