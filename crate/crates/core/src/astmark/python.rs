//! Name resolution for Python over a tree-sitter parse.
//!
//! Builds the scope tree (module, function, lambda, class, comprehension),
//! classifies every `identifier` node as a binding, a use, a declaration or
//! a non-reference (attribute fields, keyword-argument names, imported
//! module paths), then resolves each reference to the binding it denotes
//! with Python's rules: class scopes are invisible to nested scopes,
//! comprehension targets are private to the comprehension while its first
//! iterable is evaluated outside, `:=` binds in the nearest
//! non-comprehension scope, and `global` / `nonlocal` redirect bindings.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::ops::Range;

use tree_sitter::{Node, Parser, Tree};

use super::AstError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScopeKind {
    Module,
    Function,
    Lambda,
    Class,
    Comprehension,
}

impl ScopeKind {
    fn is_local(self) -> bool {
        matches!(self, ScopeKind::Function | ScopeKind::Lambda | ScopeKind::Comprehension)
    }
}

#[derive(Debug)]
pub struct Scope {
    pub kind: ScopeKind,
    pub parent: Option<usize>,
    /// Namespace introspection or dynamic evaluation happens here.
    pub dynamic: bool,
    pub has_match: bool,
    globals: HashSet<String>,
    nonlocals: HashSet<String>,
}

/// Why a binding may not be renamed, or how it is introduced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Param { keyword_only: bool },
    Assign,
    Import,
    ExceptAlias,
    Definition,
    Capture,
    Decl,
    Use,
}

#[derive(Debug)]
struct Occ {
    span: Range<usize>,
    name: String,
    scope: usize,
    role: Role,
}

#[derive(Debug)]
pub struct Binding {
    pub name: String,
    pub scope: usize,
    /// Sorted, distinct identifier spans.
    pub occurrences: Vec<Range<usize>>,
    pub roles: Vec<Role>,
    /// Scopes of the occurrences, parallel to `occurrences`.
    pub occurrence_scopes: Vec<usize>,
}

impl Binding {
    pub fn is_parameter(&self) -> bool {
        self.roles.iter().any(|r| matches!(r, Role::Param { .. }))
    }
}

#[derive(Debug)]
pub struct Analysis {
    pub scopes: Vec<Scope>,
    pub bindings: Vec<Binding>,
    /// Names used as `name=` in calls or class patterns anywhere in the file.
    pub keyword_names: HashSet<String>,
}

const DYNAMIC_CALLS: &[&str] = &["eval", "exec", "locals", "vars", "globals", "dir", "__import__"];
const DYNAMIC_ATTRS: &[&str] = &["_getframe", "currentframe", "f_locals", "f_globals", "f_back", "stack"];

pub fn parse(src: &[u8]) -> Result<Tree, AstError> {
    reparse(src, None)
}

/// Parses `src`, reusing `old` (already edited to match `src`) when given.
pub fn reparse(src: &[u8], old: Option<&Tree>) -> Result<Tree, AstError> {
    let mut parser = Parser::new();
    parser
        .set_language(&tree_sitter_python::LANGUAGE.into())
        .map_err(|e| AstError::Internal(format!("grammar: {e}")))?;
    let tree = parser
        .parse(src, old)
        .ok_or_else(|| AstError::Internal("parser returned no tree".into()))?;
    if tree.root_node().has_error() {
        let at = first_error(tree.root_node()).map(|n| n.start_position());
        return Err(AstError::Syntax(match at {
            Some(p) => format!("line {}, column {}", p.row + 1, p.column + 1),
            None => "unknown location".into(),
        }));
    }
    Ok(tree)
}

fn first_error(node: Node) -> Option<Node> {
    if node.is_error() || node.is_missing() {
        return Some(node);
    }
    let mut c = node.walk();
    let children: Vec<Node> = node.children(&mut c).collect();
    children.into_iter().filter(|n| n.has_error() || n.is_missing()).find_map(first_error)
}

pub fn analyze(src: &[u8], tree: &Tree) -> Result<Analysis, AstError> {
    let mut w = Walker {
        src,
        scopes: vec![Scope {
            kind: ScopeKind::Module,
            parent: None,
            dynamic: false,
            has_match: false,
            globals: HashSet::new(),
            nonlocals: HashSet::new(),
        }],
        occs: Vec::new(),
        keyword_names: HashSet::new(),
    };
    w.block(tree.root_node(), 0)?;
    w.propagate_dynamic();
    Ok(w.resolve())
}

struct Walker<'a> {
    src: &'a [u8],
    scopes: Vec<Scope>,
    occs: Vec<Occ>,
    keyword_names: HashSet<String>,
}

fn named_children<'t>(node: Node<'t>) -> Vec<Node<'t>> {
    let mut c = node.walk();
    node.named_children(&mut c).collect()
}

impl<'a> Walker<'a> {
    fn text(&self, node: Node) -> &'a str {
        std::str::from_utf8(&self.src[node.byte_range()]).unwrap_or("")
    }

    fn new_scope(&mut self, kind: ScopeKind, parent: usize) -> usize {
        self.scopes.push(Scope {
            kind,
            parent: Some(parent),
            dynamic: false,
            has_match: false,
            globals: HashSet::new(),
            nonlocals: HashSet::new(),
        });
        self.scopes.len() - 1
    }

    fn record(&mut self, node: Node, scope: usize, role: Role) {
        let name = self.text(node).to_string();
        self.occs.push(Occ {
            span: node.byte_range(),
            name,
            scope,
            role,
        });
    }

    fn block(&mut self, node: Node, scope: usize) -> Result<(), AstError> {
        for child in named_children(node) {
            self.visit(child, scope)?;
        }
        Ok(())
    }

    fn field_visit(&mut self, node: Node, field: &str, scope: usize) -> Result<(), AstError> {
        let mut c = node.walk();
        let kids: Vec<Node> = node.children_by_field_name(field, &mut c).collect();
        for k in kids {
            self.visit(k, scope)?;
        }
        Ok(())
    }

    /// Nearest enclosing scope that is not a comprehension.
    fn walrus_scope(&self, mut scope: usize) -> usize {
        while self.scopes[scope].kind == ScopeKind::Comprehension {
            scope = self.scopes[scope].parent.expect("comprehensions are nested");
        }
        scope
    }

    fn visit(&mut self, node: Node, scope: usize) -> Result<(), AstError> {
        match node.kind() {
            "identifier" => self.record(node, scope, Role::Use),
            "comment" => {}
            "function_definition" => self.function(node, scope)?,
            "lambda" => self.lambda(node, scope)?,
            "class_definition" => self.class(node, scope)?,
            "list_comprehension" | "set_comprehension" | "dictionary_comprehension" | "generator_expression" => {
                self.comprehension(node, scope)?
            }
            "assignment" => {
                if let Some(left) = node.child_by_field_name("left") {
                    self.targets(left, scope, Role::Assign)?;
                }
                self.field_visit(node, "type", scope)?;
                self.field_visit(node, "right", scope)?;
            }
            "augmented_assignment" => {
                if let Some(left) = node.child_by_field_name("left") {
                    self.targets(left, scope, Role::Assign)?;
                }
                self.field_visit(node, "right", scope)?;
            }
            "for_statement" => {
                if let Some(left) = node.child_by_field_name("left") {
                    self.targets(left, scope, Role::Assign)?;
                }
                self.field_visit(node, "right", scope)?;
                self.field_visit(node, "body", scope)?;
                self.field_visit(node, "alternative", scope)?;
            }
            "with_item" => {
                let value = node.child_by_field_name("value");
                match value {
                    Some(v) if v.kind() == "as_pattern" => self.as_pattern(v, scope, Role::Assign)?,
                    Some(v) => self.visit(v, scope)?,
                    None => self.block(node, scope)?,
                }
            }
            "except_clause" | "except_group_clause" => {
                for child in named_children(node) {
                    if child.kind() == "as_pattern" {
                        self.as_pattern(child, scope, Role::ExceptAlias)?;
                    } else {
                        self.visit(child, scope)?;
                    }
                }
            }
            "named_expression" => {
                let target = self.walrus_scope(scope);
                if let Some(name) = node.child_by_field_name("name") {
                    self.targets(name, target, Role::Assign)?;
                }
                self.field_visit(node, "value", scope)?;
            }
            "delete_statement" => {
                for child in named_children(node) {
                    self.targets(child, scope, Role::Assign)?;
                }
            }
            "global_statement" | "nonlocal_statement" => {
                let global = node.kind() == "global_statement";
                for child in named_children(node) {
                    if child.kind() == "identifier" {
                        let name = self.text(child).to_string();
                        if global {
                            self.scopes[scope].globals.insert(name);
                        } else {
                            self.scopes[scope].nonlocals.insert(name);
                        }
                        self.record(child, scope, Role::Decl);
                    }
                }
            }
            "import_statement" | "import_from_statement" | "future_import_statement" => self.import(node, scope),
            "attribute" => {
                self.field_visit(node, "object", scope)?;
                if let Some(attr) = node.child_by_field_name("attribute") {
                    if DYNAMIC_ATTRS.contains(&self.text(attr)) {
                        self.scopes[scope].dynamic = true;
                    }
                }
            }
            "keyword_argument" => {
                if let Some(name) = node.child_by_field_name("name") {
                    self.keyword_names.insert(self.text(name).to_string());
                }
                self.field_visit(node, "value", scope)?;
            }
            "call" => {
                if let Some(f) = node.child_by_field_name("function") {
                    if f.kind() == "identifier" && DYNAMIC_CALLS.contains(&self.text(f)) {
                        self.scopes[scope].dynamic = true;
                    }
                }
                self.block(node, scope)?;
            }
            "exec_statement" | "type_parameter" | "type_alias_statement" => {
                self.scopes[scope].dynamic = true;
                self.block(node, scope)?;
            }
            "match_statement" => {
                self.scopes[scope].has_match = true;
                self.block(node, scope)?;
            }
            "case_pattern" => self.pattern(node, scope)?,
            _ => self.block(node, scope)?,
        }
        Ok(())
    }

    fn as_pattern(&mut self, node: Node, scope: usize, role: Role) -> Result<(), AstError> {
        for child in named_children(node) {
            if child.kind() == "as_pattern_target" {
                for t in named_children(child) {
                    self.targets(t, scope, role)?;
                }
            } else if node.child_by_field_name("alias") == Some(child) {
                self.targets(child, scope, role)?;
            } else {
                self.visit(child, scope)?;
            }
        }
        Ok(())
    }

    /// Assignment targets: names bind, everything else is evaluated.
    fn targets(&mut self, node: Node, scope: usize, role: Role) -> Result<(), AstError> {
        match node.kind() {
            "identifier" => self.record(node, scope, role),
            "pattern_list" | "tuple_pattern" | "list_pattern" | "tuple" | "list" | "expression_list"
            | "parenthesized_expression" | "list_splat_pattern" | "list_splat" | "as_pattern_target" => {
                for child in named_children(node) {
                    self.targets(child, scope, role)?;
                }
            }
            _ => self.visit(node, scope)?,
        }
        Ok(())
    }

    /// Match-case patterns. Bare names capture; dotted names and class
    /// names are values; keyword-pattern keys are attribute names.
    fn pattern(&mut self, node: Node, scope: usize) -> Result<(), AstError> {
        match node.kind() {
            "dotted_name" => {
                let parts = named_children(node);
                if parts.len() == 1 && parts[0].kind() == "identifier" {
                    self.record(parts[0], scope, Role::Capture);
                } else if let Some(first) = parts.first() {
                    self.record(*first, scope, Role::Use);
                }
            }
            "identifier" => self.record(node, scope, Role::Capture),
            "class_pattern" => {
                for (i, child) in named_children(node).into_iter().enumerate() {
                    if i == 0 && child.kind() == "dotted_name" {
                        if let Some(first) = named_children(child).first() {
                            self.record(*first, scope, Role::Use);
                        }
                    } else {
                        self.pattern(child, scope)?;
                    }
                }
            }
            "keyword_pattern" => {
                for (i, child) in named_children(node).into_iter().enumerate() {
                    if i == 0 && child.kind() == "identifier" {
                        self.keyword_names.insert(self.text(child).to_string());
                    } else {
                        self.pattern(child, scope)?;
                    }
                }
            }
            "string" | "integer" | "float" | "true" | "false" | "none" | "concatenated_string" => {
                self.visit(node, scope)?
            }
            _ => {
                for child in named_children(node) {
                    self.pattern(child, scope)?;
                }
            }
        }
        Ok(())
    }

    fn import(&mut self, node: Node, scope: usize) {
        let is_from = node.kind() != "import_statement";
        let mut c = node.walk();
        let names: Vec<Node> = node.children_by_field_name("name", &mut c).collect();
        for name in names {
            match name.kind() {
                "aliased_import" => {
                    if let Some(alias) = name.child_by_field_name("alias") {
                        self.record(alias, scope, Role::Import);
                    }
                }
                "dotted_name" => {
                    let parts = named_children(name);
                    // `import a.b` binds `a`; `from m import a` binds `a`.
                    let bound = if is_from { parts.last() } else { parts.first() };
                    if let Some(b) = bound {
                        self.record(*b, scope, Role::Import);
                    }
                }
                _ => {}
            }
        }
    }

    fn parameters(&mut self, params: Node, outer: usize, inner: usize) -> Result<(), AstError> {
        let mut keyword_only = false;
        for p in named_children(params) {
            match p.kind() {
                "identifier" => self.record(p, inner, Role::Param { keyword_only }),
                "default_parameter" | "typed_default_parameter" => {
                    self.field_visit(p, "type", outer)?;
                    self.field_visit(p, "value", outer)?;
                    if let Some(name) = p.child_by_field_name("name") {
                        self.param_name(name, inner, keyword_only)?;
                    }
                }
                "typed_parameter" => {
                    self.field_visit(p, "type", outer)?;
                    for child in named_children(p) {
                        if Some(child) == p.child_by_field_name("type") {
                            continue;
                        }
                        match child.kind() {
                            "list_splat_pattern" => {
                                self.param_name(child, inner, false)?;
                                keyword_only = true;
                            }
                            "dictionary_splat_pattern" => self.param_name(child, inner, false)?,
                            _ => self.param_name(child, inner, keyword_only)?,
                        }
                    }
                }
                "list_splat_pattern" => {
                    self.param_name(p, inner, false)?;
                    keyword_only = true;
                }
                "dictionary_splat_pattern" => self.param_name(p, inner, false)?,
                "keyword_separator" => keyword_only = true,
                "positional_separator" => {}
                _ => self.targets(p, inner, Role::Param { keyword_only })?,
            }
        }
        Ok(())
    }

    fn param_name(&mut self, node: Node, scope: usize, keyword_only: bool) -> Result<(), AstError> {
        match node.kind() {
            "identifier" => {
                self.record(node, scope, Role::Param { keyword_only });
                Ok(())
            }
            "list_splat_pattern" | "dictionary_splat_pattern" => {
                for child in named_children(node) {
                    self.param_name(child, scope, keyword_only)?;
                }
                Ok(())
            }
            _ => self.targets(node, scope, Role::Param { keyword_only }),
        }
    }

    fn function(&mut self, node: Node, scope: usize) -> Result<(), AstError> {
        if let Some(name) = node.child_by_field_name("name") {
            self.record(name, scope, Role::Definition);
        }
        if node.child_by_field_name("type_parameters").is_some() {
            self.scopes[scope].dynamic = true;
        }
        let inner = self.new_scope(ScopeKind::Function, scope);
        if let Some(params) = node.child_by_field_name("parameters") {
            self.parameters(params, scope, inner)?;
        }
        self.field_visit(node, "return_type", scope)?;
        self.field_visit(node, "body", inner)
    }

    fn lambda(&mut self, node: Node, scope: usize) -> Result<(), AstError> {
        let inner = self.new_scope(ScopeKind::Lambda, scope);
        if let Some(params) = node.child_by_field_name("parameters") {
            self.parameters(params, scope, inner)?;
        }
        self.field_visit(node, "body", inner)
    }

    fn class(&mut self, node: Node, scope: usize) -> Result<(), AstError> {
        if let Some(name) = node.child_by_field_name("name") {
            self.record(name, scope, Role::Definition);
        }
        if node.child_by_field_name("type_parameters").is_some() {
            self.scopes[scope].dynamic = true;
        }
        self.field_visit(node, "superclasses", scope)?;
        let inner = self.new_scope(ScopeKind::Class, scope);
        self.field_visit(node, "body", inner)
    }

    fn comprehension(&mut self, node: Node, scope: usize) -> Result<(), AstError> {
        let inner = self.new_scope(ScopeKind::Comprehension, scope);
        let mut first = true;
        for child in named_children(node) {
            match child.kind() {
                "for_in_clause" => {
                    let right_scope = if first { scope } else { inner };
                    first = false;
                    self.field_visit(child, "right", right_scope)?;
                    if let Some(left) = child.child_by_field_name("left") {
                        self.targets(left, inner, Role::Assign)?;
                    }
                }
                _ => self.visit(child, inner)?,
            }
        }
        Ok(())
    }

    /// A dynamic scope may read any enclosing local through closures, so the
    /// flag spreads outward to every enclosing non-module scope.
    fn propagate_dynamic(&mut self) {
        for i in 0..self.scopes.len() {
            if !self.scopes[i].dynamic {
                continue;
            }
            let mut p = self.scopes[i].parent;
            while let Some(s) = p {
                if self.scopes[s].kind != ScopeKind::Module {
                    self.scopes[s].dynamic = true;
                }
                p = self.scopes[s].parent;
            }
        }
    }

    fn is_bound_in(&self, bound: &HashMap<(usize, &str), ()>, scope: usize, name: &str) -> bool {
        bound.contains_key(&(scope, name))
    }

    /// Scope whose binding a reference to `name` from `scope` denotes.
    fn lookup(&self, bound: &HashMap<(usize, &str), ()>, scope: usize, name: &str) -> usize {
        let s = &self.scopes[scope];
        if s.globals.contains(name) {
            return 0;
        }
        if s.nonlocals.contains(name) {
            return self.enclosing_function_binding(bound, scope, name);
        }
        if self.is_bound_in(bound, scope, name) {
            return scope;
        }
        let mut p = s.parent;
        while let Some(up) = p {
            let u = &self.scopes[up];
            if u.kind != ScopeKind::Class {
                if u.globals.contains(name) {
                    return 0;
                }
                if u.nonlocals.contains(name) {
                    return self.enclosing_function_binding(bound, up, name);
                }
                if self.is_bound_in(bound, up, name) {
                    return up;
                }
            }
            p = u.parent;
        }
        0
    }

    fn enclosing_function_binding(&self, bound: &HashMap<(usize, &str), ()>, scope: usize, name: &str) -> usize {
        let mut p = self.scopes[scope].parent;
        while let Some(up) = p {
            let u = &self.scopes[up];
            if matches!(u.kind, ScopeKind::Function | ScopeKind::Lambda) {
                if u.nonlocals.contains(name) {
                    return self.enclosing_function_binding(bound, up, name);
                }
                if self.is_bound_in(bound, up, name) && !u.globals.contains(name) {
                    return up;
                }
            }
            p = u.parent;
        }
        0
    }

    fn resolve(self) -> Analysis {
        let mut bound: HashMap<(usize, &str), ()> = HashMap::new();
        for o in &self.occs {
            let binds = !matches!(o.role, Role::Use | Role::Decl);
            let s = &self.scopes[o.scope];
            if binds && !s.globals.contains(&o.name) && !s.nonlocals.contains(&o.name) {
                bound.insert((o.scope, o.name.as_str()), ());
            }
        }
        let mut groups: BTreeMap<(usize, String), Vec<usize>> = BTreeMap::new();
        for (i, o) in self.occs.iter().enumerate() {
            let target = if matches!(o.role, Role::Use | Role::Decl) {
                self.lookup(&bound, o.scope, &o.name)
            } else {
                let s = &self.scopes[o.scope];
                if s.globals.contains(&o.name) {
                    0
                } else if s.nonlocals.contains(&o.name) {
                    self.enclosing_function_binding(&bound, o.scope, &o.name)
                } else {
                    o.scope
                }
            };
            groups.entry((target, o.name.clone())).or_default().push(i);
        }
        let mut bindings = Vec::with_capacity(groups.len());
        for ((scope, name), mut idx) in groups {
            idx.sort_by_key(|&i| self.occs[i].span.start);
            idx.dedup_by_key(|i| self.occs[*i].span.start);
            bindings.push(Binding {
                name,
                scope,
                occurrences: idx.iter().map(|&i| self.occs[i].span.clone()).collect(),
                roles: idx.iter().map(|&i| self.occs[i].role).collect(),
                occurrence_scopes: idx.iter().map(|&i| self.occs[i].scope).collect(),
            });
        }
        bindings.sort_by_key(|b| b.occurrences[0].start);
        Analysis {
            scopes: self.scopes,
            bindings,
            keyword_names: self.keyword_names,
        }
    }
}

impl Analysis {
    /// `Ok(is_parameter)` when the binding is a renameable local, otherwise
    /// the reason it is not.
    pub fn eligibility(&self, b: &Binding) -> Result<bool, &'static str> {
        let scope = &self.scopes[b.scope];
        if !scope.kind.is_local() {
            return Err("not a local scope");
        }
        if b.name.starts_with("__") {
            return Err("dunder or mangled name");
        }
        if crate::lexicon::RECEIVERS.contains(&b.name.as_str()) {
            return Err("method receiver");
        }
        if crate::lexicon::is_keyword(&b.name) || crate::lexicon::is_builtin(&b.name) {
            return Err("reserved name");
        }
        for r in &b.roles {
            match r {
                Role::Import => return Err("imported name"),
                Role::ExceptAlias => return Err("exception handler name"),
                Role::Definition => return Err("function or class name"),
                Role::Capture => return Err("match capture"),
                Role::Param { keyword_only: true } => return Err("keyword-only parameter"),
                _ => {}
            }
        }
        if !b.roles.iter().any(|r| matches!(r, Role::Param { .. } | Role::Assign)) {
            return Err("never bound");
        }
        if b.is_parameter() && self.keyword_names.contains(&b.name) {
            return Err("parameter name used as a keyword argument");
        }
        for &s in std::iter::once(&b.scope).chain(&b.occurrence_scopes) {
            if self.scopes[s].dynamic {
                return Err("dynamic namespace access");
            }
            if self.scopes[s].has_match {
                return Err("scope contains a match statement");
            }
        }
        Ok(b.is_parameter())
    }

    /// The binding that owns an identifier occurrence starting at `start`.
    pub fn binding_at(&self, start: usize) -> Option<&Binding> {
        self.bindings
            .iter()
            .find(|b| b.occurrences.binary_search_by_key(&start, |r| r.start).is_ok())
    }
}
