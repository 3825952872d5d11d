# Loewner Module
