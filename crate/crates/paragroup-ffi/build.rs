use std::env;
use std::path::PathBuf;

fn main() {
    let dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").unwrap());
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
    let cfg = cbindgen::Config::from_file(dir.join("cbindgen.toml")).unwrap_or_default();
    match cbindgen::Builder::new().with_crate(&dir).with_config(cfg).generate() {
        Ok(b) => {
            b.write_to_file(dir.join("include/paragroup.h"));
        }
        // keep building when the header cannot be regenerated (e.g. offline parse failure)
        Err(e) => println!("cargo:warning=cbindgen: {e}"),
    }
}
