//! Regenerate the synthetic fixtures shipped in `data/`.
//!
//! All files are synthetic: a log-normal income distribution, a smooth
//! progressive tax, a quadratic MPC curve and a taste elasticity that is
//! positive below $52,000, negative up to $160,000 and positive above.
//!
//! ```text
//! cargo run --example generate_fixtures [-- OUT_DIR]
//! ```

use std::path::PathBuf;

fn main() {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data"));
    let args = ["pigou", "calibrate", "--out", out.to_str().expect("utf-8 path")];
    let code = pigou::cli::run(args, &mut std::io::stdout(), &mut std::io::stderr());
    std::process::exit(code);
}
