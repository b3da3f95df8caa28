"""Roman numerals and other numeral systems."""

PAIRS = [
    (1000, "M"), (900, "CM"), (500, "D"), (400, "CD"), (100, "C"), (90, "XC"),
    (50, "L"), (40, "XL"), (10, "X"), (9, "IX"), (5, "V"), (4, "IV"), (1, "I"),
]


def to_roman(number):
    if not 0 < number < 4000:
        raise ValueError("out of range")
    out = []
    rest = number
    for value, symbol in PAIRS:
        while rest >= value:
            out.append(symbol)
            rest -= value
    return "".join(out)


def from_roman(text):
    table = {symbol: value for value, symbol in PAIRS if len(symbol) == 1}
    total = 0
    prev = 0
    for char in reversed(text):
        val = table[char]
        if val < prev:
            total -= val
        else:
            total += val
            prev = val
    return total


def to_base(number, base):
    digits = "0123456789abcdefghijklmnopqrstuvwxyz"
    if number == 0:
        return "0"
    sign = "-" if number < 0 else ""
    rest = abs(number)
    out = []
    while rest:
        rest, rem = divmod(rest, base)
        out.append(digits[rem])
    return sign + "".join(reversed(out))


def from_base(text, base):
    value = 0
    for char in text.lower():
        digit = int(char, 36)
        if digit >= base:
            raise ValueError("digit out of range")
        value = value * base + digit
    return value


def words(number):
    ones = ["zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine",
            "ten", "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen",
            "seventeen", "eighteen", "nineteen"]
    tens = ["", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety"]
    if number < 20:
        return ones[number]
    if number < 100:
        head, tail = divmod(number, 10)
        return tens[head] + ("-" + ones[tail] if tail else "")
    head, tail = divmod(number, 100)
    text = ones[head] + " hundred"
    if tail:
        text += " and " + words(tail)
    return text


def gray(number):
    return number ^ (number >> 1)


def ungray(code):
    mask = code >> 1
    value = code
    while mask:
        value ^= mask
        mask >>= 1
    return value


def main():
    for number in (1, 4, 9, 14, 40, 90, 400, 1994, 2024, 3999):
        text = to_roman(number)
        assert from_roman(text) == number
        print(number, text)
    assert to_roman(1994) == "MCMXCIV"
    assert to_base(255, 16) == "ff" and to_base(-10, 2) == "-1010"
    assert from_base("zz", 36) == 1295
    print("bases", [to_base(100, b) for b in (2, 3, 8, 16)])
    assert words(342) == "three hundred and forty-two"
    print(words(17), "|", words(80), "|", words(905))
    codes = [gray(n) for n in range(8)]
    assert all(ungray(c) == n for n, c in enumerate(codes))
    print("gray", codes)
    try:
        to_roman(0)
    except ValueError as exc:
        print("error", exc)


if __name__ == "__main__":
    main()
