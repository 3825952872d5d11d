# Database Module
