//! Random well-typed components that always terminate: loops are bounded
//! by a counter and helpers only call helpers declared before them. They
//! may still fault (division by zero, index out of range), which the
//! coverage comparison must handle too.

use rand::Rng;

pub struct Gen<'r, R: Rng> {
    rng: &'r mut R,
    out: String,
    locals: Vec<Vec<String>>,
    /// Loop counters and parameters; never assigned by random statements.
    frozen: Vec<String>,
    next_local: usize,
    helpers: usize,
    depth: usize,
}

const FIELDS: [&str; 3] = ["fa", "fb", "fc"];

/// A component named `G` with an `int`-returning `main`.
pub fn program<R: Rng>(rng: &mut R) -> String {
    let helpers = rng.random_range(0..3);
    let mut g = Gen {
        rng,
        out: String::new(),
        locals: Vec::new(),
        frozen: Vec::new(),
        next_local: 0,
        helpers: 0,
        depth: 0,
    };
    g.out.push_str("component G {\n");
    for f in FIELDS {
        let init = g.rng.random_range(-5..10);
        if g.rng.random_bool(0.8) {
            g.out.push_str(&format!("    var {f}: int = {init}\n"));
        } else {
            g.out.push_str(&format!("    var {f}: int\n"));
        }
    }
    let len = g.rng.random_range(0..5);
    let items: Vec<String> = (0..len).map(|_| g.rng.random_range(-3..9).to_string()).collect();
    g.out.push_str(&format!("    var arr: array<int> = [{}]\n", items.join(", ")));
    for h in 0..helpers {
        g.out.push('\n');
        g.function(&format!("h{h}(a: int, b: int)"));
        g.helpers += 1;
    }
    g.out.push('\n');
    g.function("main()");
    g.out.push_str("}\n");
    g.out
}

impl<R: Rng> Gen<'_, R> {
    fn function(&mut self, signature: &str) {
        self.out.push_str(&format!("    fn {signature}: int {{\n"));
        let params = if signature.starts_with('h') {
            vec!["a".to_string(), "b".to_string()]
        } else {
            Vec::new()
        };
        self.frozen = params.clone();
        self.locals = vec![params];
        self.depth = 0;
        let n = self.rng.random_range(1..6);
        for _ in 0..n {
            self.stmt(2);
        }
        let e = self.int_expr(2);
        self.line(2, &format!("return {e}"));
        self.out.push_str("    }\n");
    }

    fn line(&mut self, indent: usize, text: &str) {
        self.out.push_str(&"    ".repeat(indent));
        self.out.push_str(text);
        self.out.push('\n');
    }

    fn fresh(&mut self) -> String {
        self.next_local += 1;
        format!("v{}", self.next_local)
    }

    fn visible(&self) -> Vec<String> {
        self.locals.iter().flatten().cloned().collect()
    }

    fn block(&mut self, indent: usize) {
        self.locals.push(Vec::new());
        self.depth += 1;
        let n = self.rng.random_range(1..4);
        for _ in 0..n {
            self.stmt(indent);
        }
        self.depth -= 1;
        self.locals.pop();
    }

    fn stmt(&mut self, indent: usize) {
        let nested = self.depth < 3;
        match self.rng.random_range(0..10) {
            0 | 1 => {
                let name = self.fresh();
                let e = self.int_expr(2);
                self.line(indent, &format!("var {name}: int = {e}"));
                self.locals.last_mut().expect("a scope").push(name);
            }
            2 | 3 => {
                let targets: Vec<String> = FIELDS
                    .iter()
                    .map(|s| s.to_string())
                    .chain(self.visible())
                    .filter(|v| !self.frozen.contains(v))
                    .collect();
                let t = targets[self.rng.random_range(0..targets.len())].clone();
                let e = self.int_expr(2);
                self.line(indent, &format!("{t} = {e}"));
            }
            4 if nested => self.if_chain(indent),
            5 if nested => {
                let counter = self.fresh();
                let bound = self.rng.random_range(0..4);
                let c = self.bool_expr(1);
                self.line(indent, &format!("var {counter}: int = 0"));
                self.locals.last_mut().expect("a scope").push(counter.clone());
                self.frozen.push(counter.clone());
                self.line(indent, &format!("while ({counter} < {bound} && {c}) {{"));
                self.block(indent + 1);
                self.line(indent + 1, &format!("{counter} = {counter} + 1"));
                self.line(indent, "}");
            }
            6 => {
                let e = self.int_expr(1);
                self.line(indent, &format!("print({e})"));
            }
            7 => {
                let e = self.int_expr(1);
                self.line(indent, &format!("push(arr, {e})"));
            }
            8 => {
                let i = self.int_expr(1);
                let e = self.int_expr(1);
                self.line(indent, &format!("arr[{i}] = {e}"));
            }
            9 if self.rng.random_bool(0.3) => {
                let e = self.int_expr(1);
                self.line(indent, &format!("return {e}"));
            }
            _ => {
                let e = self.int_expr(2);
                self.line(indent, &format!("fa = fa + {e}"));
            }
        }
    }

    fn if_chain(&mut self, indent: usize) {
        let c = self.bool_expr(2);
        self.line(indent, &format!("if ({c}) {{"));
        self.block(indent + 1);
        let elifs = self.rng.random_range(0..3);
        for _ in 0..elifs {
            let c = self.bool_expr(2);
            self.line(indent, &format!("}} else if ({c}) {{"));
            self.block(indent + 1);
        }
        if self.rng.random_bool(0.5) {
            self.line(indent, "} else {");
            self.block(indent + 1);
        }
        self.line(indent, "}");
    }

    fn int_expr(&mut self, budget: u32) -> String {
        if budget == 0 {
            return self.int_atom();
        }
        match self.rng.random_range(0..8) {
            0..=2 => self.int_atom(),
            3 => {
                let op = ["+", "-", "*"][self.rng.random_range(0..3)];
                let a = self.int_expr(budget - 1);
                let b = self.int_expr(budget - 1);
                format!("({a} {op} {b})")
            }
            4 => {
                let op = ["/", "%"][self.rng.random_range(0..2)];
                let a = self.int_expr(budget - 1);
                let b = self.int_expr(budget - 1);
                format!("({a} {op} {b})")
            }
            5 => {
                let i = self.int_expr(budget - 1);
                format!("arr[{i}]")
            }
            6 if self.helpers > 0 => {
                let h = self.rng.random_range(0..self.helpers);
                let a = self.int_expr(budget - 1);
                let b = self.int_expr(budget - 1);
                format!("h{h}({a}, {b})")
            }
            _ => "len(arr)".to_string(),
        }
    }

    fn int_atom(&mut self) -> String {
        let vars: Vec<String> = FIELDS.iter().map(|s| s.to_string()).chain(self.visible()).collect();
        if self.rng.random_bool(0.5) {
            vars[self.rng.random_range(0..vars.len())].clone()
        } else {
            self.rng.random_range(-2..6).to_string()
        }
    }

    fn bool_expr(&mut self, budget: u32) -> String {
        match self.rng.random_range(0..5) {
            0 if budget > 0 => {
                let op = ["&&", "||"][self.rng.random_range(0..2)];
                let a = self.bool_expr(budget - 1);
                let b = self.bool_expr(budget - 1);
                format!("({a} {op} {b})")
            }
            1 if budget > 0 => {
                let a = self.bool_expr(budget - 1);
                format!("!({a})")
            }
            2 => ["true", "false"][self.rng.random_range(0..2)].to_string(),
            _ => {
                let op = ["<", "<=", ">", ">=", "==", "!="][self.rng.random_range(0..6)];
                let a = self.int_expr(1);
                let b = self.int_expr(1);
                format!("{a} {op} {b}")
            }
        }
    }
}
