mod common;

use cslow::elaborate::elaborate;
use cslow::frontend::{infer_top, parse_source, subset_check};

#[test]
fn corpus_is_clean() {
    for name in common::FIXTURES {
        let u = parse_source(&common::fixture(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        let d = subset_check(&u);
        assert!(d.is_empty(), "{name}: {d:?}");
        let top = infer_top(&u).unwrap();
        let g = elaborate(&u, top).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(!g.comb_nodes.is_empty(), "{name}");
    }
}
