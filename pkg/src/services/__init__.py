"""Services package."""