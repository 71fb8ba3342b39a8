use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").unwrap());
    let header = crate_dir.join("include").join("combwalk.h");

    let mut config = cbindgen::Config::default();
    config.language = cbindgen::Language::C;
    config.include_guard = Some("COMBWALK_H".into());
    config.cpp_compat = true;
    config.documentation = true;
    config.enumeration.prefix_with_name = true;
    config.enumeration.rename_variants = cbindgen::RenameRule::ScreamingSnakeCase;
    config.header = Some(
        "/* C interface for the combwalk persistent-walk library.\n \
         * Strings returned through char** outputs are owned by the library;\n \
         * release them with cw_string_free. Models are opaque handles released\n \
         * with cw_model_free. All functions are safe to call from any thread;\n \
         * cw_last_error_message returns a thread-local string valid until the\n \
         * next failing call on the same thread. */"
            .into(),
    );

    cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(config)
        .generate()
        .expect("generating the C header")
        .write_to_file(header);

    println!("cargo:rerun-if-changed=src/lib.rs");
}
