"""A small JSON encoder and decoder."""


def encode(value, indent=0):
    pad = " " * indent
    if value is None:
        return "null"
    if value is True:
        return "true"
    if value is False:
        return "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, str):
        out = ['"']
        for char in value:
            if char in '"\\':
                out.append("\\" + char)
            elif char == "\n":
                out.append("\\n")
            else:
                out.append(char)
        out.append('"')
        return "".join(out)
    if isinstance(value, list):
        parts = [encode(item, indent) for item in value]
        return "[" + ", ".join(parts) + "]"
    if isinstance(value, dict):
        parts = []
        for key in sorted(value):
            parts.append(pad + encode(key) + ": " + encode(value[key], indent))
        return "{" + ", ".join(parts) + "}"
    raise TypeError("cannot encode " + type(value).__name__)


class Decoder:
    def __init__(self, text):
        self.text = text
        self.pos = 0

    def skip(self):
        while self.pos < len(self.text) and self.text[self.pos] in " \n\t\r":
            self.pos += 1

    def parse(self):
        self.skip()
        char = self.text[self.pos]
        if char == "{":
            return self.parse_object()
        if char == "[":
            return self.parse_array()
        if char == '"':
            return self.parse_string()
        for word, result in (("null", None), ("true", True), ("false", False)):
            if self.text.startswith(word, self.pos):
                self.pos += len(word)
                return result
        return self.parse_number()

    def parse_number(self):
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos] in "+-0123456789.eE":
            self.pos += 1
        chunk = self.text[start:self.pos]
        return float(chunk) if any(c in chunk for c in ".eE") else int(chunk)

    def parse_string(self):
        self.pos += 1
        out = []
        while self.text[self.pos] != '"':
            char = self.text[self.pos]
            if char == "\\":
                self.pos += 1
                esc = self.text[self.pos]
                out.append("\n" if esc == "n" else esc)
            else:
                out.append(char)
            self.pos += 1
        self.pos += 1
        return "".join(out)

    def parse_array(self):
        self.pos += 1
        items = []
        self.skip()
        if self.text[self.pos] == "]":
            self.pos += 1
            return items
        while True:
            items.append(self.parse())
            self.skip()
            sep = self.text[self.pos]
            self.pos += 1
            if sep == "]":
                return items

    def parse_object(self):
        self.pos += 1
        obj = {}
        self.skip()
        if self.text[self.pos] == "}":
            self.pos += 1
            return obj
        while True:
            self.skip()
            key = self.parse_string()
            self.skip()
            self.pos += 1
            obj[key] = self.parse()
            self.skip()
            sep = self.text[self.pos]
            self.pos += 1
            if sep == "}":
                return obj


def main():
    doc = {"name": "widget", "tags": ["a", "b"], "size": 3, "ratio": 0.25, "ok": True, "none": None, "quote": 'say "hi"\n'}
    text = encode(doc)
    print(text)
    back = Decoder(text).parse()
    assert back == doc
    nested = Decoder('{"a": [1, 2, {"b": []}], "c": {}}').parse()
    assert nested == {"a": [1, 2, {"b": []}], "c": {}}
    print("nested", encode(nested))
    assert Decoder("-12").parse() == -12 and Decoder("1.5e2").parse() == 150.0
    try:
        encode({1, 2})
    except TypeError as exc:
        print("error", exc)


if __name__ == "__main__":
    main()
