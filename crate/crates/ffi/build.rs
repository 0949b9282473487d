use std::env;
use std::path::PathBuf;

fn main() {
    let manifest_dir = env::var("CARGO_MANIFEST_DIR").unwrap();
    let out = PathBuf::from(&manifest_dir).join("include").join("reachlab.h");
    std::fs::create_dir_all(out.parent().unwrap()).unwrap();

    cbindgen::Builder::new()
        .with_crate(&manifest_dir)
        .with_language(cbindgen::Language::C)
        .with_include_guard("REACHLAB_H")
        .with_sys_include("stdint.h")
        .with_sys_include("stddef.h")
        .with_documentation(true)
        .generate()
        .expect("cbindgen failed")
        .write_to_file(&out);

    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
}
