# Source code package
