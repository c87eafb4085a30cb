//! Write the NIH-style and CheXpert-style fixtures plus a covariate pair to a
//! directory, for trying the CLI by hand.
//!
//! cargo run -p cxr-harmon --example write_fixtures -- /tmp/fixtures

use std::path::PathBuf;

use cxr_harmon::fixtures::{covariate_pair, write_chexpert_fixture, write_dataset, write_nih_fixture};

fn main() -> cxr_harmon::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    let nih = write_nih_fixture(&dir.join("nih"))?;
    let chex = write_chexpert_fixture(&dir.join("chexpert"))?;
    let (a, b) = covariate_pair("Effusion", 20, 0)?;
    let a = write_dataset(&dir.join("source_a"), &a)?;
    let b = write_dataset(&dir.join("source_b"), &b)?;
    for p in [nih, chex, a, b] {
        println!("{}", p.display());
    }
    Ok(())
}
