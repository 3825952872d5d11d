# Scheduler Module
