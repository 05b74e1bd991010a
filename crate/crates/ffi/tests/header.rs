use std::path::Path;
use std::process::Command;

/// The generated header must be valid C declaring every exported function.
#[test]
fn header_compiles_as_c() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = dir.join("include").join("searchlight_rsa.h");
    let text = std::fs::read_to_string(&header).expect("header is generated by the build script");
    for name in [
        "srsa_version",
        "srsa_last_error_message",
        "srsa_pearson",
        "srsa_spearman",
        "srsa_partial_correlation",
        "srsa_searchlight_offset_count",
        "srsa_design_new",
        "srsa_design_free",
        "srsa_design_dims",
        "srsa_design_values",
        "srsa_design_bcov",
        "srsa_volume_read",
        "srsa_volume_free",
        "srsa_volume_dims",
        "srsa_volume_data",
        "srsa_simulate_json",
        "srsa_string_free",
    ] {
        assert!(
            text.contains(&format!("{name}(")),
            "{name} missing from header"
        );
    }

    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"searchlight_rsa.h\"\n\
         int main(void) {\n\
           size_t n = 0;\n\
           SrsaStatus s = srsa_searchlight_offset_count(8.0, 2.0, &n);\n\
           SrsaDesign *d = NULL;\n\
           srsa_design_free(d);\n\
           return s == SrsaStatus_Ok ? 0 : 1;\n\
         }\n",
    )
    .unwrap();
    let status = match Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(dir.join("include"))
        .arg(&src)
        .status()
    {
        Ok(s) => s,
        Err(_) => {
            eprintln!("no C compiler available; skipped compiling the header");
            return;
        }
    };
    assert!(status.success());
}
