# Experiments Module
