"""Build the desk-scale sentence corpus from a MediaWiki XML dump.

Usage: prepare_corpus.py DUMP.xml[.bz2] OUT.txt [--max-sentences N]

Each output line is one lowercase sentence over [a-z'] words separated by
single spaces. Sentences containing digits are dropped, other punctuation
is removed.
"""
import argparse
import bz2
import html
import re
import xml.etree.ElementTree as ET

TEMPLATE = re.compile(r"\{\{[^{}]*\}\}")
TABLE = re.compile(r"\{\|.*?\|\}", re.S)
REF = re.compile(r"<ref[^>/]*/>|<ref[^>]*>.*?</ref>", re.S)
TAG = re.compile(r"<[^>]+>")
COMMENT = re.compile(r"<!--.*?-->", re.S)
LINK = re.compile(r"\[\[(?:[^|\]]*\|)?([^\]]*)\]\]")
EXTLINK = re.compile(r"\[https?://[^\s\]]*\s?([^\]]*)\]")
SENT_SPLIT = re.compile(r"(?<=[.!?])\s+(?=[A-Z])")
WORD = re.compile(r"^[a-z']+$")


def strip_markup(text):
    text = COMMENT.sub(" ", text)
    text = REF.sub(" ", text)
    for _ in range(4):
        text = TEMPLATE.sub(" ", text)
    text = TABLE.sub(" ", text)
    text = re.sub(r"\[\[(File|Image|Category|[a-z\-]{2,12}):[^\]]*\]\]", " ", text)
    text = LINK.sub(r"\1", text)
    text = EXTLINK.sub(r"\1", text)
    text = TAG.sub(" ", html.unescape(text))
    text = re.sub(r"'{2,}", "", text)
    return text


def sentences(text):
    for line in text.split("\n"):
        line = line.strip()
        if not line or line[0] in "*#:;=|!{}" or len(line) < 40:
            continue
        for s in SENT_SPLIT.split(line):
            yield s


def normalize(sentence):
    if re.search(r"[0-9]", sentence):
        return None
    s = sentence.lower().replace("’", "'")
    s = re.sub(r"[^a-z'\s]", " ", s)
    words = [w.strip("'") for w in s.split()]
    words = [w for w in words if w and WORD.match(w)]
    if len(words) < 3 or len(words) > 40:
        return None
    return " ".join(words)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("dump")
    ap.add_argument("out")
    ap.add_argument("--max-sentences", type=int, default=0)
    args = ap.parse_args()
    opener = bz2.open if args.dump.endswith(".bz2") else open
    count = 0
    with opener(args.dump, "rb") as fh, open(args.out, "w") as out:
        for _, elem in ET.iterparse(fh):
            if not elem.tag.endswith("}text") or not elem.text:
                elem.clear()
                continue
            if elem.text.lstrip().lower().startswith("#redirect"):
                elem.clear()
                continue
            for s in sentences(strip_markup(elem.text)):
                norm = normalize(s)
                if norm:
                    out.write(norm + "\n")
                    count += 1
                    if args.max_sentences and count >= args.max_sentences:
                        return
            elem.clear()


if __name__ == "__main__":
    main()
