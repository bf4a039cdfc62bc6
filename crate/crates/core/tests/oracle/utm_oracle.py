from pyproj import Transformer
def fwd(zone, south=False):
    epsg = (32700 if south else 32600) + zone
    return Transformer.from_crs("EPSG:4326", f"EPSG:{epsg}", always_xy=True)
def inv(zone, south=False):
    epsg = (32700 if south else 32600) + zone
    return Transformer.from_crs(f"EPSG:{epsg}", "EPSG:4326", always_xy=True)
cases = [
 # origin lat, lon, point lat, lon
 (48.0, 11.6, 48.0 + 1/3600, 11.6),
 (48.0, 11.6, 48.26, 11.67),
 (48.0, 11.6, 47.5, 12.9),
 (-33.9, 151.2, -34.3, 150.6),
 (0.5, 3.2, -0.4, 4.1),
 (64.1, -21.9, 64.6, -21.0),
]
for olat, olon, plat, plon in cases:
    zone = int((olon + 180)//6) + 1
    south = olat < 0
    f = fwd(zone, south)
    ox, oy = f.transform(olon, olat)
    px, py = f.transform(plon, plat)
    print(f"proj origin=({olat},{olon}) p=({plat!r},{plon!r}) zone={zone} -> ({px-ox:.6f}, {py-oy:.6f})")
# unproject (1000,0) from origin 48, 11.6
f = fwd(32); i = inv(32)
ox, oy = f.transform(11.6, 48.0)
lon, lat = i.transform(ox+1000, oy)
print(f"unproject (1000,0) -> lat={lat:.12f} lon={lon:.12f}")
lon, lat = i.transform(ox-25000, oy+40000)
print(f"unproject (-25000,40000) -> lat={lat:.12f} lon={lon:.12f}")
