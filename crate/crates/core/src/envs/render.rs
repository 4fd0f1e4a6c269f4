pub const FRAME_SIZE: usize = 84;
pub const FRAME_LEN: usize = FRAME_SIZE * FRAME_SIZE;

/// Row-major 84×84 grayscale image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pixels: Vec<f64>,
}

impl Frame {
    pub fn filled(value: f64) -> Self {
        Self {
            pixels: vec![value; FRAME_LEN],
        }
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * FRAME_SIZE + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.pixels[row * FRAME_SIZE + col] = value;
    }

    /// Paints pixels whose centers lie within `radius` of `(cx, cy)`, all in pixel units.
    pub fn fill_disk(&mut self, cx: f64, cy: f64, radius: f64, value: f64) {
        let r2 = radius * radius;
        let lo_row = (cy - radius).floor().max(0.0) as usize;
        let hi_row = ((cy + radius).ceil().max(0.0) as usize).min(FRAME_SIZE);
        let lo_col = (cx - radius).floor().max(0.0) as usize;
        let hi_col = ((cx + radius).ceil().max(0.0) as usize).min(FRAME_SIZE);
        for row in lo_row..hi_row {
            let dy = row as f64 + 0.5 - cy;
            for col in lo_col..hi_col {
                let dx = col as f64 + 0.5 - cx;
                if dx * dx + dy * dy <= r2 {
                    self.set(row, col, value);
                }
            }
        }
    }

    /// Paints the half-open pixel rectangle `[row0, row1) × [col0, col1)`.
    pub fn fill_rect(&mut self, row0: usize, row1: usize, col0: usize, col1: usize, value: f64) {
        for row in row0..row1.min(FRAME_SIZE) {
            for col in col0..col1.min(FRAME_SIZE) {
                self.set(row, col, value);
            }
        }
    }
}
