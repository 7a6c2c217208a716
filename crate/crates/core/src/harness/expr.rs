//! Matrix expressions used in config values.
//!
//! Grammar: sums and products of numbers, `[[..],[..]]` literals and the
//! functions `eye(n)`, `zeros(r[, c])`, `diag(x, ...)`, `kron(A, B)`.
//! `*` is scalar scaling or matrix multiplication.

use nalgebra::DMatrix;

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Scalar(f64),
    Matrix(DMatrix<f64>),
}

impl Value {
    fn into_matrix(self) -> DMatrix<f64> {
        match self {
            Value::Scalar(s) => DMatrix::from_element(1, 1, s),
            Value::Matrix(m) => m,
        }
    }

    fn as_count(&self, what: &str) -> Result<usize, String> {
        match *self {
            Value::Scalar(s) if s >= 1.0 && s.fract() == 0.0 => Ok(s as usize),
            _ => Err(format!("{what} expects a positive integer")),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), String> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(format!("expected '{}' at column {}", c as char, self.pos + 1))
        }
    }

    fn expr(&mut self) -> Result<Value, String> {
        let mut acc = self.term()?;
        loop {
            if self.eat(b'+') {
                acc = add(acc, self.term()?, 1.0)?;
            } else if self.eat(b'-') {
                acc = add(acc, self.term()?, -1.0)?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self) -> Result<Value, String> {
        let mut acc = self.factor()?;
        while self.eat(b'*') {
            acc = mul(acc, self.factor()?)?;
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<Value, String> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                mul(Value::Scalar(-1.0), self.factor()?)
            }
            Some(b'(') => {
                self.pos += 1;
                let v = self.expr()?;
                self.expect(b')')?;
                Ok(v)
            }
            Some(b'[') => self.literal().map(Value::Matrix),
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number().map(Value::Scalar),
            Some(c) if c.is_ascii_alphabetic() => self.call(),
            Some(c) => Err(format!("unexpected '{}' at column {}", c as char, self.pos + 1)),
            None => Err("unexpected end of expression".into()),
        }
    }

    fn number(&mut self) -> Result<f64, String> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() {
            let c = self.src[self.pos];
            let exp_sign = (c == b'-' || c == b'+') && matches!(self.src.get(self.pos - 1), Some(b'e' | b'E'));
            if c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E' || exp_sign {
                self.pos += 1;
            } else {
                break;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        text.parse().map_err(|_| format!("invalid number '{text}'"))
    }

    fn signed_number(&mut self) -> Result<f64, String> {
        let neg = self.eat(b'-');
        if !neg {
            self.eat(b'+');
        }
        let v = self.number()?;
        Ok(if neg { -v } else { v })
    }

    fn row(&mut self) -> Result<Vec<f64>, String> {
        self.expect(b'[')?;
        let mut row = vec![self.signed_number()?];
        while self.eat(b',') {
            row.push(self.signed_number()?);
        }
        self.expect(b']')?;
        Ok(row)
    }

    /// `[[a, b], [c, d]]` or a single row `[a, b]`.
    fn literal(&mut self) -> Result<DMatrix<f64>, String> {
        let save = self.pos;
        self.expect(b'[')?;
        if self.peek() != Some(b'[') {
            self.pos = save;
            let row = self.row()?;
            return Ok(DMatrix::from_row_slice(1, row.len(), &row));
        }
        let mut rows = vec![self.row()?];
        while self.eat(b',') {
            rows.push(self.row()?);
        }
        self.expect(b']')?;
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err("matrix literal rows have different lengths".into());
        }
        let flat: Vec<f64> = rows.concat();
        Ok(DMatrix::from_row_slice(rows.len(), cols, &flat))
    }

    fn call(&mut self) -> Result<Value, String> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_') {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii").to_string();
        self.expect(b'(')?;
        let mut args = vec![self.expr()?];
        while self.eat(b',') {
            args.push(self.expr()?);
        }
        self.expect(b')')?;
        match (name.as_str(), args.len()) {
            ("eye", 1) => {
                let n = args[0].as_count("eye")?;
                Ok(Value::Matrix(DMatrix::identity(n, n)))
            }
            ("zeros", 1) => {
                let n = args[0].as_count("zeros")?;
                Ok(Value::Matrix(DMatrix::zeros(n, n)))
            }
            ("zeros", 2) => Ok(Value::Matrix(DMatrix::zeros(args[0].as_count("zeros")?, args[1].as_count("zeros")?))),
            ("kron", 2) => {
                let b = args.pop().expect("two args").into_matrix();
                let a = args.pop().expect("two args").into_matrix();
                Ok(Value::Matrix(a.kronecker(&b)))
            }
            ("diag", _) => {
                let entries = args
                    .into_iter()
                    .map(|v| match v {
                        Value::Scalar(s) => Ok(s),
                        Value::Matrix(_) => Err("diag expects scalar arguments".to_string()),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Value::Matrix(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(entries))))
            }
            (other, n) => Err(format!("unknown function {other} with {n} argument(s)")),
        }
    }
}

fn add(a: Value, b: Value, sign: f64) -> Result<Value, String> {
    match (a, b) {
        (Value::Scalar(x), Value::Scalar(y)) => Ok(Value::Scalar(x + sign * y)),
        (Value::Matrix(x), Value::Matrix(y)) if x.shape() == y.shape() => Ok(Value::Matrix(x + y * sign)),
        (Value::Matrix(x), Value::Matrix(y)) => Err(format!("cannot add {:?} and {:?} matrices", x.shape(), y.shape())),
        _ => Err("cannot add a scalar and a matrix".into()),
    }
}

fn mul(a: Value, b: Value) -> Result<Value, String> {
    match (a, b) {
        (Value::Scalar(x), Value::Scalar(y)) => Ok(Value::Scalar(x * y)),
        (Value::Scalar(s), Value::Matrix(m)) | (Value::Matrix(m), Value::Scalar(s)) => Ok(Value::Matrix(m * s)),
        (Value::Matrix(x), Value::Matrix(y)) if x.ncols() == y.nrows() => Ok(Value::Matrix(x * y)),
        (Value::Matrix(x), Value::Matrix(y)) => Err(format!("cannot multiply {:?} by {:?}", x.shape(), y.shape())),
    }
}

/// Evaluates a matrix expression; scalars become `1 × 1` matrices.
pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>, String> {
    let mut p = Parser { src: text.as_bytes(), pos: 0 };
    let v = p.expr()?;
    if p.peek().is_some() {
        return Err(format!("trailing input at column {}", p.pos + 1));
    }
    Ok(v.into_matrix())
}

/// Renders a matrix as a literal that [`parse_matrix`] reads back exactly.
pub fn format_matrix(m: &DMatrix<f64>) -> String {
    let rows: Vec<String> = m
        .row_iter()
        .map(|r| format!("[{}]", r.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(", ")))
        .collect();
    format!("[{}]", rows.join(", "))
}
