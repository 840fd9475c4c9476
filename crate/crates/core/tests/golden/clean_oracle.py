"""Reference HTML cleaner used to produce the *.txt golden files.

Usage: python3 clean_oracle.py  (rewrites every <name>.txt next to <name>.html)
"""
import glob
import os
from html.parser import HTMLParser

SKIPPED = {"script", "style", "noscript", "template", "head", "nav", "header", "footer", "aside"}
BLOCK = {
    "address", "article", "blockquote", "body", "br", "caption", "dd", "details", "div", "dl",
    "dt", "figcaption", "figure", "h1", "h2", "h3", "h4", "h5", "h6", "hr", "html", "li", "main",
    "ol", "option", "p", "pre", "section", "summary", "table", "tbody", "td", "tfoot", "th",
    "thead", "title", "tr", "ul",
}
VOID = {"br", "hr", "img", "meta", "link", "input", "area", "base", "col", "embed", "source", "track", "wbr"}


class Cleaner(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.out = []
        self.skip_depth = 0

    def handle_starttag(self, tag, attrs):
        if self.skip_depth:
            if tag in SKIPPED:
                self.skip_depth += 1
            return
        if tag in SKIPPED:
            self.skip_depth = 1
            return
        if tag in BLOCK:
            self.out.append(" ")

    def handle_endtag(self, tag):
        if self.skip_depth:
            if tag in SKIPPED:
                self.skip_depth -= 1
            return
        if tag in BLOCK:
            self.out.append(" ")

    def handle_startendtag(self, tag, attrs):
        if not self.skip_depth and tag in BLOCK:
            self.out.append("  ")

    def handle_data(self, data):
        if not self.skip_depth:
            self.out.append(data)


def clean(html):
    p = Cleaner()
    p.feed(html)
    p.close()
    return " ".join("".join(p.out).split())


if __name__ == "__main__":
    here = os.path.dirname(os.path.abspath(__file__))
    for path in sorted(glob.glob(os.path.join(here, "*.html"))):
        with open(path, encoding="utf-8") as f:
            text = clean(f.read())
        with open(path[:-5] + ".txt", "w", encoding="utf-8") as f:
            f.write(text + "\n")
