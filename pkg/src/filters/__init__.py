# Parameter-particle filters
