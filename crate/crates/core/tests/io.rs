use std::fs;

use coda_zero::io::ingest_csv;

fn ingest(text: &str) -> Result<coda_zero::CountMatrix, String> {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.csv");
    fs::write(&path, text).unwrap();
    ingest_csv(&path).map_err(|e| e.to_string())
}

#[test]
fn well_formed_file_keeps_labels() {
    let m = ingest(",a,b,c\nr1,1,2,3\nr2,0,5,6\nr3,7,8,9\n").unwrap();
    assert_eq!(m.row_labels(), ["r1", "r2", "r3"]);
    assert_eq!(m.col_labels(), ["a", "b", "c"]);
    assert_eq!(m.counts()[(1, 2)], 6);
}

#[test]
fn bad_cells_are_located() {
    let neg = ingest(",a,b\nr1,1,2\nr2,-1,4\n").unwrap_err();
    assert!(neg.contains("line 3") && neg.contains("'a'"), "{neg}");
    let frac = ingest(",a,b\nr1,1,2.5\n").unwrap_err();
    assert!(frac.contains("non-integer") && frac.contains("'b'"), "{frac}");
    for text in [",a,b\nr1,1\n", ",a,a\nr1,1,2\n", "", ",a,b\n", ",a,b\nr1,NaN,2\n"] {
        assert!(ingest(text).is_err(), "{text:?}");
    }
}
