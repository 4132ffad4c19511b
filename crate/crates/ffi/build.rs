use std::env;
use std::path::PathBuf;

fn main() {
    let dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").expect("manifest dir"));
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
    let config = cbindgen::Config::from_file(dir.join("cbindgen.toml")).expect("cbindgen.toml");
    match cbindgen::Builder::new().with_crate(&dir).with_config(config).generate() {
        Ok(bindings) => {
            std::fs::create_dir_all(dir.join("include")).expect("include dir");
            bindings.write_to_file(dir.join("include").join("geoint.h"));
        }
        Err(e) => println!("cargo:warning=header generation skipped: {e}"),
    }
}
