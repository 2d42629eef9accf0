//! Prints the per-layer parameter audit of both networks.
//!
//! ```text
//! cargo run --example audit
//! ```

use deblur_gan::arch::{audit_architecture, discriminator_spec, generator_spec};

fn main() {
    for spec in [generator_spec(), discriminator_spec()] {
        println!("{}", audit_architecture(&spec));
    }
}
