# Harmonic Module
