# (prediction, gold list, expected em bit); expectations worked out by hand
EM_CASES = [
    ("1987", ["1987"], 1),
    ("1985", ["1987"], 0),
    ("The answer", ["answer"], 1),
    ("The Beatles!", ["Beatles"], 1),
    ("a  1987", ["1987"], 1),
    ("Loren  Bouchard.", ["loren bouchard"], 1),
    ("LOREN BOUCHARD", ["Loren Bouchard"], 1),
    ("  October 28, 1968 ", ["October 28 1968"], 1),
    ("October 28, 1968", ["October 29, 1968"], 0),
    ("an apple", ["apple"], 1),
    ("theatre", ["atre"], 0),
    ("Bob's Burgers", ["Bobs Burgers"], 1),
    ("Paris", ["London", "paris"], 1),
    ("Paris", ["London", "Berlin"], 0),
    ("", ["x"], 0),
    ("Mc Donald's", ["McDonalds"], 0),
    ("A Tale of Two Cities", ["tale of two cities"], 1),
    ("New\tYork\nCity", ["new york city"], 1),
    ("U.S.A.", ["usa"], 1),
    ("1987 1985", ["1987"], 0),
]
