#!/usr/bin/env python3
"""Regenerates the bundled corpora in this directory.

mini_urls.csv   ~2000 URLs in the url,type layout of the public malicious-URL
                dump (benign, phishing, defacement, malware), with a little
                label noise.
toy_emails.csv  64 short emails (text,label), separable by vocabulary.

Output is fixed by SEED; rerunning rewrites identical files.
"""

import csv
import random
from pathlib import Path

SEED = 20240611
HERE = Path(__file__).resolve().parent

WORDS = (
    "news sport music travel recipe garden review science history weather "
    "python rust linux docs guide tutorial blog forum photo video research "
    "library museum school course health family market energy climate city"
).split()
BRANDS = "paypal apple amazon netflix microsoft chase wellsfargo benbank citi hsbc dropbox office".split()
BANKS = "benbank chase citi hsbc wellsfargo barclays santander".split()
BENIGN_HOSTS = (
    "en.wikipedia.org github.com stackoverflow.com youtube.com bbc.co.uk nytimes.com "
    "reddit.com medium.com docs.python.org imdb.com espn.com linkedin.com "
    "mozilla.org apache.org nature.com arxiv.org cnn.com theguardian.com"
).split()
BAD_TLDS = "xyz top info tk ml ga cf gq ru cn biz".split()
CMS_SITES = "villaroma.it autoteile-gmbh.de escolafutura.com.br hotel-sunrise.gr tallerlopez.es".split()
MALWARE_FILES = "bins/mozi.m bins/mozi.a i.sh update.exe setup.apk invoice.doc.exe x86 arm7".split()


def rword(r):
    return r.choice(WORDS)


def slug(r, n):
    return "-".join(rword(r) for _ in range(n))


def benign(r):
    host = r.choice(BENIGN_HOSTS)
    kind = r.randrange(8)
    if kind == 6:
        # Genuine sign-in pages share most grams with lookalikes.
        brand = r.choice(BRANDS)
        action = r.choice(["signin", "login", "account", "security", "myaccount"])
        return f"www.{brand}.com/{action}"
    if kind == 7:
        return f"accounts.{r.choice(['google.com', 'microsoft.com', 'apple.com'])}/{r.choice(['login', 'verify', 'recovery'])}?continue={rword(r)}"
    if kind == 0:
        return f"{host}/wiki/{rword(r).capitalize()}_{rword(r)}"
    if kind == 1:
        return f"{host}/{rword(r)}/{slug(r, r.randint(2, 4))}"
    if kind == 2:
        return f"{host}/watch?v={''.join(r.choice('abcdefghijkmnpqrstuvwxyzABCDEFGH0123456789_') for _ in range(11))}"
    if kind == 3:
        return f"www.{rword(r)}{rword(r)}.com/{rword(r)}.html"
    if kind == 4:
        bank = r.choice(BANKS)
        return f"www.{bank}.com/{r.choice(['personal', 'business', 'about', 'careers'])}/{rword(r)}"
    return f"{host}/{r.randint(2005, 2024)}/{r.randint(1, 12):02d}/{slug(r, 3)}"


def phishing(r):
    brand = r.choice(BRANDS)
    tld = r.choice(BAD_TLDS + ["com", "net"])
    kind = r.randrange(8)
    action = r.choice(["verify", "secure", "login", "update", "confirm", "account"])
    if kind == 6:
        # Free hosting on reputable domains.
        return f"sites.google.com/view/{brand}-{action}{r.randint(1, 99)}"
    if kind == 7:
        return f"{brand}-{action}-{rword(r)}.github.io/{r.choice(['', 'index.html', 'login.html'])}"
    if kind == 0:
        return f"www.{action}-{brand}.{tld}/login"
    if kind == 1:
        return f"{brand}.com-{action}-{r.randint(100, 999)}.{tld}/signin.php"
    if kind == 2:
        return f"http://{r.choice(BENIGN_HOSTS).split('.')[0]}{r.randint(1, 99)}.{tld}/{brand}/{action}/index.html"
    if kind == 3:
        return f"{action}-{r.choice(BANKS)}-online.{tld}/{action}.php?id={r.randint(10000, 99999)}"
    if kind == 4:
        return f"https://{brand}-{action}.{r.choice(['web', 'support', 'help'])}-{rword(r)}.{tld}/"
    return f"{r.choice(['bit.ly', 'tinyurl.com'])}/{action}-{brand}{r.randint(1, 999)}"


def defacement(r):
    site = r.choice(CMS_SITES)
    return (
        f"http://www.{site}/index.php?option=com_{r.choice(['content', 'user', 'mailto'])}"
        f"&view={r.choice(['article', 'category', 'section'])}&id={r.randint(1, 400)}&itemid={r.randint(1, 90)}"
    )


def malware(r):
    ip = ".".join(str(r.randint(1, 254)) for _ in range(4))
    port = r.choice(["", ":8080", f":{r.randint(30000, 60000)}"])
    return f"http://{ip}{port}/{r.choice(MALWARE_FILES)}"


def urls(r):
    rows = []
    for kind, make, n in (
        ("benign", benign, 1300),
        ("phishing", phishing, 380),
        ("defacement", defacement, 180),
        ("malware", malware, 140),
    ):
        for _ in range(n):
            rows.append([make(r), kind])
    # A few mislabeled rows, as in scraped feeds.
    for row in r.sample(rows, 40):
        row[1] = "phishing" if row[1] == "benign" else "benign"
    r.shuffle(rows)
    return rows


PHISH_SENTENCES = [
    "your account has been suspended verify your password now",
    "urgent action required confirm your bank details today",
    "we detected unusual login activity click here to secure your account",
    "your payment failed update your billing information immediately",
    "you have won a prize claim your reward by entering your card number",
    "final notice your mailbox will be closed unless you verify",
    "security alert reset your password using the link below",
    "your invoice is overdue download the attached document to avoid penalty",
]
HAM_SENTENCES = [
    "the team meeting is moved to thursday afternoon",
    "attached are the notes from yesterday's planning session",
    "can we grab lunch next week to talk about the project",
    "the quarterly report draft is ready for your comments",
    "thanks for the photos from the weekend hiking trip",
    "reminder the library books are due on monday",
    "please review the pull request when you have a moment",
    "the garden club meets on saturday at the community hall",
]


def emails(r):
    rows = []
    for label, pool in ((1, PHISH_SENTENCES), (0, HAM_SENTENCES)):
        for i in range(32):
            first = pool[i % len(pool)]
            second = r.choice(pool)
            rows.append([f"{first.capitalize()}. {second.capitalize()}.", label])
    r.shuffle(rows)
    return rows


def write(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def main():
    write(HERE / "mini_urls.csv", ["url", "type"], urls(random.Random(SEED)))
    write(HERE / "toy_emails.csv", ["text", "label"], emails(random.Random(SEED + 1)))


if __name__ == "__main__":
    main()
