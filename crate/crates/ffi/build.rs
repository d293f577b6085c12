use std::path::PathBuf;

fn main() {
    let crate_dir = PathBuf::from(std::env::var("CARGO_MANIFEST_DIR").expect("set by cargo"));
    let header = crate_dir.join("include").join("fedveil.h");
    std::fs::create_dir_all(header.parent().expect("include dir")).expect("create include dir");

    cbindgen::generate(&crate_dir)
        .expect("cbindgen header generation")
        .write_to_file(&header);

    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
}
