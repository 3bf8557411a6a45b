//! Plain string-splitting reading of a clinical CSV, independent of the
//! crate's parser.

/// Present values and the row indices of empty cells in `column`.
pub fn column_cells(csv: &str, column: &str) -> (Vec<f64>, Vec<usize>) {
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let j = header.iter().position(|h| *h == column).unwrap();
    let (mut present, mut missing) = (Vec::new(), Vec::new());
    for (r, line) in lines.enumerate() {
        let cell = line.split(',').nth(j).unwrap().trim();
        if cell.is_empty() {
            missing.push(r);
        } else {
            present.push(cell.parse().unwrap());
        }
    }
    (present, missing)
}

/// Mean with the sum taken in row order.
pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
