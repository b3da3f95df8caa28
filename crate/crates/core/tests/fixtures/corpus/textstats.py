"""Word and sentence statistics."""

import string

TEXT = """The quick brown fox jumps over the lazy dog. The dog sleeps.
A fox is quick; a dog is lazy. Foxes and dogs are animals!
Is the fox quicker than the dog? Nobody knows the answer."""


def words_of(text):
    clean = text.lower()
    for mark in string.punctuation:
        clean = clean.replace(mark, " ")
    return clean.split()


def frequencies(words):
    counts = {}
    for word in words:
        counts[word] = counts.get(word, 0) + 1
    return counts


def top_words(counts, limit):
    ranked = sorted(counts.items(), key=lambda pair: (-pair[1], pair[0]))
    return ranked[:limit]


def sentences(text):
    parts = []
    current = []
    for char in text:
        current.append(char)
        if char in ".!?":
            chunk = "".join(current).strip()
            if chunk:
                parts.append(chunk)
            current = []
    tail = "".join(current).strip()
    if tail:
        parts.append(tail)
    return parts


def average_length(words):
    if not words:
        return 0.0
    total = sum(len(word) for word in words)
    return total / len(words)


def longest(words):
    best = ""
    for word in words:
        if len(word) > len(best) or (len(word) == len(best) and word < best):
            best = word
    return best


def vowel_ratio(text):
    vowels = 0
    letters = 0
    for char in text.lower():
        if char.isalpha():
            letters += 1
            if char in "aeiou":
                vowels += 1
    return vowels / letters if letters else 0.0


def capitalize_sentences(text):
    out = []
    for sentence in sentences(text):
        first = sentence[0].upper()
        out.append(first + sentence[1:])
    return " ".join(out)


def bigrams(words):
    pairs = {}
    for left, right in zip(words, words[1:]):
        key = left + " " + right
        pairs[key] = pairs.get(key, 0) + 1
    return pairs


def histogram(counts, width):
    peak = max(counts.values())
    lines = []
    for word, count in top_words(counts, 5):
        bar = "#" * max(1, count * width // peak)
        lines.append("%-8s %s" % (word, bar))
    return lines


def main():
    words = words_of(TEXT)
    assert len(words) == 36
    counts = frequencies(words)
    assert counts["the"] == 6
    print("top", top_words(counts, 4))
    parts = sentences(TEXT)
    assert len(parts) == 6
    print("sentences", len(parts))
    avg = average_length(words)
    print("avg", round(avg, 3))
    assert longest(words) == "animals"
    print("ratio", round(vowel_ratio(TEXT), 4))
    print(capitalize_sentences("hello there. general kenobi! you are bold."))
    grams = bigrams(words)
    assert grams["the dog"] == 2
    print("bigram", sorted(grams.items())[:3])
    for line in histogram(counts, 12):
        print(line)


if __name__ == "__main__":
    main()
