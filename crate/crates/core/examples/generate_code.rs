//! Rebuilds the shipped length-1024 (3,6) LDPC parity-check matrix.
//!
//! Run from the workspace root: `cargo run -p ris-iterative --example generate_code`.
//! The transfer table is rebuilt with `ris-sim transfer-table`.

fn main() {
    let h = ris_iterative::coding::ParityCheck::progressive_edge_growth(1024, 3, 6, ris_iterative::coding::DEFAULT_CODE_SEED)
        .expect("PEG construction");
    eprintln!("girth {}", h.girth());
    std::fs::write("crates/core/data/ldpc_3_6_1024.alist", h.to_alist()).expect("write ALIST");
}
