//! Python reserved names.

pub const KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class",
    "continue", "def", "del", "elif", "else", "except", "finally", "for", "from", "global",
    "if", "import", "in", "is", "lambda", "nonlocal", "not", "or", "pass", "raise", "return",
    "try", "while", "with", "yield",
];

pub const SOFT_KEYWORDS: &[&str] = &["match", "case", "type", "_"];

pub const BUILTINS: &[&str] = &[
    "abs", "aiter", "all", "anext", "any", "ascii", "bin", "bool", "breakpoint", "bytearray",
    "bytes", "callable", "chr", "classmethod", "compile", "complex", "copyright", "credits",
    "delattr", "dict", "dir", "divmod", "enumerate", "eval", "exec", "exit", "filter", "float",
    "format", "frozenset", "getattr", "globals", "hasattr", "hash", "help", "hex", "id",
    "input", "int", "isinstance", "issubclass", "iter", "len", "license", "list", "locals",
    "map", "max", "memoryview", "min", "next", "object", "oct", "open", "ord", "pow", "print",
    "property", "quit", "range", "repr", "reversed", "round", "set", "setattr", "slice",
    "sorted", "staticmethod", "str", "sum", "super", "tuple", "vars", "zip", "__import__",
    "NotImplemented", "Ellipsis", "__debug__", "__name__", "__file__", "__doc__",
    "Exception", "BaseException", "ArithmeticError", "AssertionError", "AttributeError",
    "EOFError", "IndexError", "KeyError", "KeyboardInterrupt", "LookupError", "MemoryError",
    "NameError", "NotImplementedError", "OSError", "OverflowError", "RecursionError",
    "RuntimeError", "StopIteration", "SyntaxError", "SystemExit", "TypeError", "ValueError",
    "ZeroDivisionError", "FileNotFoundError", "IOError", "UnicodeError", "Warning",
];

/// Receiver names that are conventional rather than reserved; renaming them
/// is legal but conspicuous.
pub const RECEIVERS: &[&str] = &["self", "cls"];

pub fn is_keyword(name: &str) -> bool {
    KEYWORDS.contains(&name) || SOFT_KEYWORDS.contains(&name)
}

pub fn is_builtin(name: &str) -> bool {
    BUILTINS.contains(&name)
}

/// `[A-Za-z_][A-Za-z0-9_]*`. Non-ASCII identifiers are legal Python but are
/// never produced as candidates.
pub fn is_identifier(name: &str) -> bool {
    let mut bytes = name.bytes();
    match bytes.next() {
        Some(b) if b.is_ascii_alphabetic() || b == b'_' => {}
        _ => return false,
    }
    bytes.all(|b| b.is_ascii_alphanumeric() || b == b'_')
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identifiers() {
        assert!(is_identifier("counter2"));
        assert!(is_identifier("_x"));
        assert!(!is_identifier("2x"));
        assert!(!is_identifier(" idx"));
        assert!(!is_identifier(""));
        assert!(is_keyword("for") && is_keyword("match"));
        assert!(is_builtin("len") && !is_builtin("total"));
    }
}
